"""The 9x9 block grid: cells, domino blocks, placement and footprints.

Cells are addressed as ``(col, row)`` with row 0 at the bottom.  A grid is
stored as an 81-bit integer, bit ``row * 9 + col`` set when the cell is
occupied, which keeps grids immutable, hashable and cheap to copy.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

SIZE = 9
NUM_CELLS = SIZE * SIZE
_FULL = (1 << NUM_CELLS) - 1


class PlacementError(Exception):
    """A block could not be placed; the program being executed is invalid."""


class OutOfBounds(PlacementError):
    pass


class CellOccupied(PlacementError):
    pass


class NotMonotone(ValueError):
    pass


class Cell(NamedTuple):
    col: int
    row: int

    def in_bounds(self) -> bool:
        return 0 <= self.col < SIZE and 0 <= self.row < SIZE

    @property
    def index(self) -> int:
        return self.row * SIZE + self.col

    @classmethod
    def from_index(cls, index: int) -> Cell:
        return cls(index % SIZE, index // SIZE)


class Orientation(enum.IntEnum):
    HORIZONTAL = 0
    VERTICAL = 1

    @property
    def letter(self) -> str:
        return "H" if self is Orientation.HORIZONTAL else "V"

    @classmethod
    def parse(cls, text: str | int) -> Orientation:
        if isinstance(text, (int, np.integer)):
            return cls(int(text))
        key = text.strip().lower()
        if key in ("h", "horizontal"):
            return cls.HORIZONTAL
        if key in ("v", "vertical"):
            return cls.VERTICAL
        raise ValueError(f"unknown orientation {text!r}")


class PrimitiveBlock(NamedTuple):
    """A 2x1 (horizontal) or 1x2 (vertical) domino anchored at its lower-left cell."""

    orientation: Orientation
    anchor: Cell

    def cells(self) -> tuple[Cell, Cell]:
        c, r = self.anchor
        if self.orientation == Orientation.HORIZONTAL:
            return Cell(c, r), Cell(c + 1, r)
        return Cell(c, r), Cell(c, r + 1)

    def __str__(self) -> str:
        return f"{self.orientation.letter}@({self.anchor.col},{self.anchor.row})"


@dataclass(frozen=True)
class Grid:
    bits: int = 0

    def __post_init__(self):
        if self.bits < 0 or self.bits > _FULL:
            raise ValueError("grid bitmask exceeds 81 cells")

    @classmethod
    def empty(cls) -> Grid:
        return cls(0)

    @classmethod
    def from_cells(cls, cells: Iterable[tuple[int, int]]) -> Grid:
        bits = 0
        for c, r in cells:
            cell = Cell(c, r)
            if not cell.in_bounds():
                raise OutOfBounds(f"cell {cell} outside the grid")
            bits |= 1 << cell.index
        return cls(bits)

    def __contains__(self, cell: tuple[int, int]) -> bool:
        c, r = cell
        if not (0 <= c < SIZE and 0 <= r < SIZE):
            return False
        return bool(self.bits >> (r * SIZE + c) & 1)

    def cells(self) -> frozenset[Cell]:
        return frozenset(Cell.from_index(i) for i in range(NUM_CELLS) if self.bits >> i & 1)

    @property
    def popcount(self) -> int:
        return bin(self.bits).count("1")

    def to_string(self) -> str:
        """81 characters of '0'/'1', row-major, bottom row first."""
        return "".join("1" if self.bits >> i & 1 else "0" for i in range(NUM_CELLS))

    @classmethod
    def from_string(cls, text: str) -> Grid:
        if len(text) != NUM_CELLS or set(text) - {"0", "1"}:
            raise ValueError("grid string must be 81 characters of '0'/'1'")
        return cls(sum(1 << i for i, ch in enumerate(text) if ch == "1"))

    def to_array(self, dtype=np.float32) -> np.ndarray:
        return np.array([self.bits >> i & 1 for i in range(NUM_CELLS)], dtype=dtype)

    @classmethod
    def from_array(cls, values) -> Grid:
        flat = np.asarray(values).reshape(-1)
        if flat.size != NUM_CELLS:
            raise ValueError("expected 81 values")
        return cls(sum(1 << int(i) for i in np.flatnonzero(flat)))

    def render(self, on: str = "#", off: str = ".") -> str:
        """ASCII picture with the top row first (as it would be seen)."""
        rows = []
        for r in reversed(range(SIZE)):
            rows.append("".join(on if (c, r) in self else off for c in range(SIZE)))
        return "\n".join(rows)

    def __str__(self) -> str:
        return self.to_string()


def place_block(grid: Grid, block: PrimitiveBlock) -> Grid:
    bits = grid.bits
    for cell in block.cells():
        if not cell.in_bounds():
            raise OutOfBounds(f"{block} leaves the grid at {tuple(cell)}")
        mask = 1 << cell.index
        if bits & mask:
            raise CellOccupied(f"{block} overlaps occupied cell {tuple(cell)}")
        bits |= mask
    return Grid(bits)


def grid_diff(before: Grid, after: Grid) -> frozenset[Cell]:
    if before.bits & ~after.bits:
        raise NotMonotone("a cell set before the step is unset after it")
    return Grid(after.bits & ~before.bits).cells()


@dataclass(frozen=True)
class Footprint:
    """A translation-normalised set of cell offsets.

    The lexicographically smallest ``(col, row)`` offset is moved to ``(0, 0)``;
    rows of other offsets may therefore be negative.
    """

    cells: frozenset[tuple[int, int]]

    def __post_init__(self):
        if not self.cells:
            raise ValueError("a footprint needs at least one cell")
        origin = min(self.cells)
        if origin != (0, 0):
            shifted = frozenset((c - origin[0], r - origin[1]) for c, r in self.cells)
            object.__setattr__(self, "cells", shifted)

    @classmethod
    def of(cls, cells: Iterable[tuple[int, int]]) -> Footprint:
        return cls(frozenset((int(c), int(r)) for c, r in cells))

    @classmethod
    def of_blocks(cls, blocks: Iterable[PrimitiveBlock]) -> Footprint:
        return cls.of(cell for block in blocks for cell in block.cells())

    def normalize(self) -> Footprint:
        return Footprint(self.cells)

    @property
    def width(self) -> int:
        cols = [c for c, _ in self.cells]
        return max(cols) - min(cols) + 1

    @property
    def height(self) -> int:
        rows = [r for _, r in self.cells]
        return max(rows) - min(rows) + 1

    def sorted_cells(self) -> list[tuple[int, int]]:
        return sorted(self.cells)

    def __len__(self) -> int:
        return len(self.cells)
