"""Letter-like shapes, two-shape goal scenes and the train/test split."""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .grid import SIZE, Cell, Footprint, Grid, Orientation, PrimitiveBlock, place_block
from .symlang import HORIZ, VERT, Program, normalize_triples

MAX_SHAPE_WIDTH = 4
MIN_RECURRING_SUBSHAPES = 8


class InvalidShapeSpec(ValueError):
    pass


class InsufficientRecurrence(ValueError):
    pass


class ShapeTooWide(ValueError):
    pass


@dataclass(frozen=True)
class Shape:
    id: int
    name: str
    blocks: tuple[PrimitiveBlock, ...]

    @property
    def footprint(self) -> Footprint:
        return Footprint.of_blocks(self.blocks)

    @property
    def width(self) -> int:
        return 1 + max(c.col for b in self.blocks for c in b.cells())

    @property
    def height(self) -> int:
        return 1 + max(c.row for b in self.blocks for c in b.cells())

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "blocks": [
                {"orientation": b.orientation.letter, "col": b.anchor.col, "row": b.anchor.row}
                for b in self.blocks
            ],
        }


@dataclass(frozen=True)
class Scene:
    id: int
    left: int
    right: int
    left_anchor: Cell
    right_anchor: Cell
    goal: Grid
    canonical_program: Program

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "left": self.left,
            "right": self.right,
            "left_anchor": list(self.left_anchor),
            "right_anchor": list(self.right_anchor),
            "goal": self.goal.to_string(),
            "program": self.canonical_program.to_json(),
        }

    @classmethod
    def from_json(cls, data: dict) -> Scene:
        return cls(
            data["id"],
            data["left"],
            data["right"],
            Cell(*data["left_anchor"]),
            Cell(*data["right_anchor"]),
            Grid.from_string(data["goal"]),
            Program.from_json(data["program"]),
        )


@dataclass(frozen=True)
class Split:
    train: tuple[Scene, ...]
    test: tuple[Scene, ...]


def build_order(blocks: Sequence[PrimitiveBlock]) -> tuple[PrimitiveBlock, ...]:
    """Column-major, bottom-to-top."""
    return tuple(sorted(blocks, key=lambda b: (b.anchor.col, b.anchor.row, b.orientation)))


def _parse_shape(item: dict) -> Shape:
    blocks = []
    for raw in item["blocks"]:
        blocks.append(PrimitiveBlock(Orientation.parse(raw["orientation"]), Cell(raw["col"], raw["row"])))
    return Shape(int(item["id"]), str(item.get("name", item["id"])), build_order(blocks))


def validate_shape(shape: Shape) -> None:
    if len(shape.blocks) < 2:
        raise InvalidShapeSpec(f"shape {shape.name!r} needs at least 2 blocks")
    seen: set[Cell] = set()
    for block in shape.blocks:
        for cell in block.cells():
            if not cell.in_bounds():
                raise InvalidShapeSpec(f"shape {shape.name!r}: {block} is out of bounds")
            if cell in seen:
                raise InvalidShapeSpec(f"shape {shape.name!r}: blocks overlap at {tuple(cell)}")
            seen.add(cell)
    cols = {c.col for c in seen}
    rows = {c.row for c in seen}
    if min(cols) != 0 or min(rows) != 0:
        raise InvalidShapeSpec(f"shape {shape.name!r} must touch column 0 and row 0")
    if shape.width > MAX_SHAPE_WIDTH:
        raise InvalidShapeSpec(f"shape {shape.name!r} is wider than {MAX_SHAPE_WIDTH} columns")


def recurring_subshapes(shapes: Sequence[Shape], min_blocks: int = 2) -> dict[Footprint, set[int]]:
    """Footprints of contiguous build-order runs that occur in two or more shapes."""
    owners: dict[Footprint, set[int]] = {}
    for shape in shapes:
        n = len(shape.blocks)
        for i in range(n):
            for j in range(i + min_blocks, n + 1):
                fp = Footprint.of_blocks(shape.blocks[i:j])
                owners.setdefault(fp, set()).add(shape.id)
    return {fp: ids for fp, ids in owners.items() if len(ids) >= 2}


def parse_shape_library(data: list[dict], expected: int | None = 31) -> list[Shape]:
    shapes = [_parse_shape(item) for item in data]
    if expected is not None and len(shapes) != expected:
        raise InvalidShapeSpec(f"expected {expected} shapes, got {len(shapes)}")
    if sorted(s.id for s in shapes) != list(range(len(shapes))):
        raise InvalidShapeSpec("shape ids must be 0..n-1")
    shapes.sort(key=lambda s: s.id)
    footprints: dict[Footprint, str] = {}
    for shape in shapes:
        validate_shape(shape)
        fp = shape.footprint
        if fp in footprints:
            raise InvalidShapeSpec(f"shapes {footprints[fp]!r} and {shape.name!r} share a footprint")
        footprints[fp] = shape.name
    return shapes


def load_shape_spec(spec_file: str | Path | None = None) -> list[dict]:
    if spec_file is None or spec_file == "builtin":
        text = resources.files("pace").joinpath("shapes.json").read_text()
    else:
        text = Path(spec_file).read_text()
    return json.loads(text)


def build_shape_library(spec_file: str | Path | None = None) -> list[Shape]:
    shapes = parse_shape_library(load_shape_spec(spec_file))
    recurring = recurring_subshapes(shapes)
    if len(recurring) < MIN_RECURRING_SUBSHAPES:
        raise InsufficientRecurrence(
            f"only {len(recurring)} sub-shapes recur across shapes "
            f"(need {MIN_RECURRING_SUBSHAPES})"
        )
    return shapes


def _shape_program_steps(shape: Shape, dcol: int) -> list[tuple[int, tuple[int, int]]]:
    steps = []
    for block in shape.blocks:
        action = HORIZ if block.orientation == Orientation.HORIZONTAL else VERT
        steps.append((action, (block.anchor.col + dcol, block.anchor.row)))
    return steps


def compose_scene(left: Shape, right: Shape, scene_id: int) -> Scene:
    offset = left.width + 1
    if offset + right.width > SIZE:
        raise ShapeTooWide(f"{left.name!r} and {right.name!r} do not fit side by side")
    steps = _shape_program_steps(left, 0) + _shape_program_steps(right, offset)
    program = Program(tuple(steps))
    grid = Grid.empty()
    for shape, dcol in ((left, 0), (right, offset)):
        for block in shape.blocks:
            moved = PrimitiveBlock(block.orientation, Cell(block.anchor.col + dcol, block.anchor.row))
            grid = place_block(grid, moved)
    return Scene(scene_id, left.id, right.id, Cell(0, 0), Cell(offset, 0), grid, program)


def compose_scenes(shapes: Sequence[Shape]) -> list[Scene]:
    n = len(shapes)
    return [compose_scene(l, r, l.id * n + r.id) for l in shapes for r in shapes]


def split_scenes(scenes: Sequence[Scene], seed: int) -> Split:
    """Hold out one scene per shape, pairing shape i with sigma(i) for a random permutation."""
    n = int(round(len(scenes) ** 0.5))
    if n * n != len(scenes):
        raise ValueError("expected one scene per ordered pair of shapes")
    by_pair = {(s.left, s.right): s for s in scenes}
    sigma = np.random.default_rng(seed).permutation(n)
    test_pairs = {(i, int(sigma[i])) for i in range(n)}
    test = tuple(by_pair[p] for p in sorted(test_pairs))
    train = tuple(s for s in sorted(scenes, key=lambda s: s.id) if (s.left, s.right) not in test_pairs)
    return Split(train, test)


@dataclass(frozen=True)
class Dataset:
    shapes: tuple[Shape, ...]
    scenes: tuple[Scene, ...]
    split: Split
    seed: int

    @property
    def train(self) -> tuple[Scene, ...]:
        return self.split.train

    @property
    def test(self) -> tuple[Scene, ...]:
        return self.split.test

    def scene(self, scene_id: int) -> Scene:
        return self.scenes[scene_id]

    def mean_canonical_length(self, scenes: Sequence[Scene] | None = None) -> float:
        scenes = self.scenes if scenes is None else scenes
        return float(np.mean([len(s.canonical_program) for s in scenes]))

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "shapes": [s.to_json() for s in self.shapes],
            "scenes": [s.to_json() for s in self.scenes],
            "split": {
                "train": [s.id for s in self.train],
                "test": [s.id for s in self.test],
            },
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    def content_hash(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps() + "\n")

    @classmethod
    def from_json(cls, data: dict) -> Dataset:
        shapes = tuple(parse_shape_library(data["shapes"], expected=None))
        scenes = tuple(Scene.from_json(s) for s in data["scenes"])
        by_id = {s.id: s for s in scenes}
        split = Split(
            tuple(by_id[i] for i in data["split"]["train"]),
            tuple(by_id[i] for i in data["split"]["test"]),
        )
        return cls(shapes, scenes, split, data["seed"])

    @classmethod
    def load(cls, path: str | Path) -> Dataset:
        return cls.from_json(json.loads(Path(path).read_text()))


def make_dataset(spec_file: str | Path | None = None, seed: int = 0, n_shapes: int | None = None) -> Dataset:
    """Build shapes, scenes and split.  ``n_shapes`` keeps only the first shapes (desk-scale runs)."""
    shapes = build_shape_library(spec_file)
    if n_shapes is not None:
        shapes = [Shape(i, s.name, s.blocks) for i, s in enumerate(shapes[:n_shapes])]
    scenes = compose_scenes(shapes)
    return Dataset(tuple(shapes), tuple(scenes), split_scenes(scenes, seed), seed)


def _run_pattern(blocks: Sequence[PrimitiveBlock]):
    return normalize_triples([(int(b.orientation), b.anchor.col, b.anchor.row) for b in blocks])[0]


def subshape_frequency(shapes: Sequence[Shape], blocks: Sequence[PrimitiveBlock]) -> int:
    """Occurrences of a build-order run (matched up to translation) across shapes."""
    target = _run_pattern(blocks)
    k = len(blocks)
    return sum(
        _run_pattern(shape.blocks[i : i + k]) == target
        for shape in shapes
        for i in range(len(shape.blocks) - k + 1)
    )


def shape_counts(scenes: Sequence[Scene]) -> tuple[Counter, Counter]:
    return Counter(s.left for s in scenes), Counter(s.right for s in scenes)
