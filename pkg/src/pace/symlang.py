"""The architect's symbolic language: actions, lexicon, programs and MDL parsing.

An action's meaning is its *pattern*: the ordered list of primitive blocks it
flattens to, written as ``(orientation, dcol, drow)`` offsets from the
action's anchor (the lexicographically smallest cell it covers).  Parsing
works on flattened primitive sequences, so a program can be re-expressed
with any action in the lexicon regardless of how it was originally written.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Sequence

from .grid import Cell, Footprint, Grid, Orientation, PrimitiveBlock, place_block

HORIZ = 0
VERT = 1

Triple = tuple[int, int, int]  # (orientation, col, row)
Pattern = tuple[Triple, ...]


class UnknownAction(KeyError):
    pass


class ActionKind(enum.Enum):
    PRIMITIVE = "primitive"
    ABSTRACTION = "abstraction"


def _block_cells(o: int, c: int, r: int) -> tuple[tuple[int, int], tuple[int, int]]:
    if o == HORIZ:
        return (c, r), (c + 1, r)
    return (c, r), (c, r + 1)


def pattern_cells(triples: Iterable[Triple]) -> list[tuple[int, int]]:
    return [cell for o, c, r in triples for cell in _block_cells(o, c, r)]


def normalize_triples(triples: Sequence[Triple]) -> tuple[Pattern, tuple[int, int]]:
    """Translate absolute triples so their anchor sits at the origin.

    Returns the pattern and the absolute anchor it was measured from.
    """
    ac, ar = min(pattern_cells(triples))
    return tuple((o, c - ac, r - ar) for o, c, r in triples), (ac, ar)


def relative_to_first(triples: Sequence[Triple]) -> Pattern:
    _, c0, r0 = triples[0]
    return tuple((o, c - c0, r - r0) for o, c, r in triples)


@dataclass(frozen=True)
class Action:
    id: int
    kind: ActionKind
    pattern: Pattern
    expansion: tuple[tuple[int, tuple[int, int]], ...] = ()
    footprint: Footprint = field(init=False, compare=False)

    def __post_init__(self):
        if self.kind is ActionKind.ABSTRACTION and len(self.expansion) < 2:
            raise ValueError("an abstraction expands to at least two actions")
        object.__setattr__(self, "footprint", Footprint.of(pattern_cells(self.pattern)))

    @property
    def size(self) -> int:
        return len(self.pattern)

    @property
    def is_primitive(self) -> bool:
        return self.kind is ActionKind.PRIMITIVE

    @property
    def key(self) -> str:
        return pattern_key(self.pattern)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "key": self.key,
            "size": self.size,
            "expansion": [{"action": a, "offset": list(off)} for a, off in self.expansion],
            "pattern": [list(t) for t in self.pattern],
            "footprint": [list(c) for c in self.footprint.sorted_cells()],
        }


def pattern_key(pattern: Pattern) -> str:
    """Compact, stable text form of a pattern, e.g. ``V0,0|V0,2``."""
    return "|".join(f"{'HV'[o]}{c},{r}" for o, c, r in pattern)


HORIZONTAL_ACTION = Action(HORIZ, ActionKind.PRIMITIVE, ((HORIZ, 0, 0),))
VERTICAL_ACTION = Action(VERT, ActionKind.PRIMITIVE, ((VERT, 0, 0),))


class PlacedAction(NamedTuple):
    action: int
    anchor: Cell

    def __str__(self) -> str:
        return f"a{self.action}@({self.anchor.col},{self.anchor.row})"


@dataclass(frozen=True)
class Program:
    steps: tuple[PlacedAction, ...]

    def __post_init__(self):
        steps = tuple(PlacedAction(int(a), Cell(*anchor)) for a, anchor in self.steps)
        if not steps:
            raise ValueError("a program has at least one step")
        object.__setattr__(self, "steps", steps)

    @classmethod
    def of(cls, *steps: tuple[int, tuple[int, int]]) -> Program:
        return cls(tuple(steps))

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self) -> Iterator[PlacedAction]:
        return iter(self.steps)

    def actions(self) -> tuple[int, ...]:
        return tuple(s.action for s in self.steps)

    def __str__(self) -> str:
        return "[" + " ".join(str(s) for s in self.steps) + "]"

    def to_json(self) -> list:
        return [[s.action, s.anchor.col, s.anchor.row] for s in self.steps]

    @classmethod
    def from_json(cls, data) -> Program:
        return cls(tuple((a, (c, r)) for a, c, r in data))


ProgramTable = dict[int, list[Program]]


class Lexicon:
    """An ordered, append-only collection of actions; ids equal positions."""

    def __init__(self, actions: Iterable[Action] | None = None):
        self.actions: tuple[Action, ...] = (
            tuple(actions) if actions is not None else (HORIZONTAL_ACTION, VERTICAL_ACTION)
        )
        for i, action in enumerate(self.actions):
            if action.id != i:
                raise ValueError("action ids must follow introduction order")
        self._by_pattern: dict[Pattern, int] = {}
        self._trie: dict = {}
        for action in self.actions:
            if action.pattern in self._by_pattern:
                raise ValueError(f"duplicate action pattern {action.key}")
            self._by_pattern[action.pattern] = action.id
            _trie_insert(self._trie, relative_to_first(action.pattern), action.id)

    def __len__(self) -> int:
        return len(self.actions)

    def __getitem__(self, action_id: int) -> Action:
        if not 0 <= action_id < len(self.actions):
            raise UnknownAction(action_id)
        return self.actions[action_id]

    def __iter__(self) -> Iterator[Action]:
        return iter(self.actions)

    def __contains__(self, action_id: int) -> bool:
        return 0 <= action_id < len(self.actions)

    def __eq__(self, other) -> bool:
        return isinstance(other, Lexicon) and self.actions == other.actions

    def __hash__(self) -> int:
        return hash(self.actions)

    @property
    def next_id(self) -> int:
        return len(self.actions)

    @property
    def trie(self) -> dict:
        return self._trie

    def find(self, pattern: Pattern) -> int | None:
        return self._by_pattern.get(pattern)

    def abstraction(self, expansion: Sequence[tuple[int, tuple[int, int]]]) -> Action:
        """Build (without adding) the next abstraction from child actions at offsets."""
        triples = []
        for child, (dc, dr) in expansion:
            for o, c, r in self[child].pattern:
                triples.append((o, c + dc, r + dr))
        pattern, (ac, ar) = normalize_triples(triples)
        expansion = tuple((int(child), (dc - ac, dr - ar)) for child, (dc, dr) in expansion)
        return Action(self.next_id, ActionKind.ABSTRACTION, pattern, expansion)

    def with_action(self, action: Action) -> Lexicon:
        if action.id != self.next_id:
            raise ValueError(f"expected action id {self.next_id}, got {action.id}")
        return Lexicon(self.actions + (action,))

    def to_json(self) -> list:
        return [a.to_json() for a in self.actions]

    @classmethod
    def from_json(cls, data: list) -> Lexicon:
        actions = []
        for item in data:
            kind = ActionKind(item["kind"])
            pattern = tuple(tuple(t) for t in item["pattern"])
            expansion = tuple((e["action"], tuple(e["offset"])) for e in item["expansion"])
            actions.append(Action(item["id"], kind, pattern, expansion))
        return cls(actions)


_END = "$"


def _trie_insert(trie: dict, key: Pattern, value: int) -> None:
    node = trie
    for element in key:
        node = node.setdefault(element, {})
    node[_END] = value


def flat_triples(program: Program, lexicon: Lexicon) -> list[Triple]:
    out: list[Triple] = []
    for action_id, (ac, ar) in program.steps:
        for o, c, r in lexicon[action_id].pattern:
            out.append((o, c + ac, r + ar))
    return out


def flatten(program: Program, lexicon: Lexicon) -> list[PrimitiveBlock]:
    return [
        PrimitiveBlock(Orientation(o), Cell(c, r)) for o, c, r in flat_triples(program, lexicon)
    ]


def execute(program: Program, lexicon: Lexicon) -> Grid:
    grid = Grid.empty()
    for block in flatten(program, lexicon):
        grid = place_block(grid, block)
    return grid


def match_edges(seq: Sequence[Triple], trie: dict) -> list[list[tuple[int, int]]]:
    """For each start position, every ``(end, action_id)`` whose pattern matches there."""
    n = len(seq)
    edges: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for j in range(n):
        _, c0, r0 = seq[j]
        node = trie
        for i in range(j, n):
            o, c, r = seq[i]
            node = node.get((o, c - c0, r - r0))
            if node is None:
                break
            if _END in node:
                edges[j].append((i + 1, node[_END]))
    return edges


def suffix_costs(n: int, edges: Sequence[Sequence[tuple[int, int]]]) -> list[float]:
    cost = [math.inf] * (n + 1)
    cost[n] = 0
    for j in range(n - 1, -1, -1):
        best = math.inf
        for e, _ in edges[j]:
            if cost[e] + 1 < best:
                best = cost[e] + 1
        cost[j] = best
    return cost


def mdl(program: Program, lexicon: Lexicon) -> int:
    """Fewest lexicon actions that rebuild the program's primitive sequence."""
    seq = flat_triples(program, lexicon)
    return int(suffix_costs(len(seq), match_edges(seq, lexicon.trie))[0])


def sequence_mdl(seq: Sequence[Triple], lexicon: Lexicon) -> int:
    return int(suffix_costs(len(seq), match_edges(seq, lexicon.trie))[0])


def _placed(seq: Sequence[Triple], start: int, action: Action) -> PlacedAction:
    _, c, r = seq[start]
    _, pc, pr = action.pattern[0]
    return PlacedAction(action.id, Cell(c - pc, r - pr))


def optimal_parse(program: Program, lexicon: Lexicon) -> Program:
    """An MDL-optimal rewrite, choosing the longest match at each step from the left."""
    seq = flat_triples(program, lexicon)
    edges = match_edges(seq, lexicon.trie)
    cost = suffix_costs(len(seq), edges)
    steps, j = [], 0
    while j < len(seq):
        for e, aid in sorted(edges[j], reverse=True):
            if cost[e] + 1 == cost[j]:
                steps.append(_placed(seq, j, lexicon[aid]))
                j = e
                break
    return Program(tuple(steps))


def rewrite_with(program: Program, new_action: Action, lexicon: Lexicon) -> Program | None:
    """Return an MDL-optimal parse that uses ``new_action``, if one exists.

    Among optimal parses containing the new action at least once, the one
    taking the longest match at each position from the left is returned.
    """
    if new_action.id not in lexicon or lexicon[new_action.id].pattern != new_action.pattern:
        raise UnknownAction(new_action.id)
    seq = flat_triples(program, lexicon)
    n = len(seq)
    edges = match_edges(seq, lexicon.trie)
    free = suffix_costs(n, edges)
    # using[j]: cheapest parse of seq[j:] that contains the new action
    using = [math.inf] * (n + 1)
    for j in range(n - 1, -1, -1):
        best = math.inf
        for e, aid in edges[j]:
            rest = free[e] if aid == new_action.id else using[e]
            if rest + 1 < best:
                best = rest + 1
        using[j] = best
    if using[0] == math.inf or using[0] > free[0]:
        return None
    steps, j, need = [], 0, True
    while j < n:
        target = using[j] if need else free[j]
        for e, aid in sorted(edges[j], reverse=True):
            still_needed = need and aid != new_action.id
            rest = using[e] if still_needed else free[e]
            if rest + 1 == target:
                steps.append(_placed(seq, j, lexicon[aid]))
                j, need = e, still_needed
                break
    return Program(tuple(steps))


def prune_table(table: ProgramTable, qtable, keep: int = 3) -> ProgramTable:
    """Keep each scene's ``keep`` highest-quality programs (ties: shorter, then older)."""
    from .bandit import program_quality

    if keep < 1:
        raise ValueError("keep must be at least 1")
    pruned: ProgramTable = {}
    for scene, programs in table.items():
        if len(programs) <= keep:
            pruned[scene] = list(programs)
            continue
        ranked = sorted(
            range(len(programs)),
            key=lambda i: (-program_quality(programs[i], qtable), len(programs[i]), i),
        )
        chosen = sorted(ranked[:keep])
        pruned[scene] = [programs[i] for i in chosen]
    return pruned
