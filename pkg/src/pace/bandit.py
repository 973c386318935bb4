"""Program selection: per-action Q-values, program quality and epsilon-greedy choice."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class MissingQ(KeyError):
    pass


class EmptyArmSet(ValueError):
    pass


class SelectionMode(enum.Enum):
    EPSILON_GREEDY = "epsilon_greedy"
    GREEDY = "greedy"


@dataclass
class QTable:
    alpha: float = 0.5
    gamma: float = 0.99
    epsilon: float = 0.1
    q_init: float = 0.0
    values: dict[int, float] = field(default_factory=dict)

    @classmethod
    def for_actions(cls, action_ids: Iterable[int], **hyper) -> QTable:
        table = cls(**hyper)
        for a in action_ids:
            table.add(a)
        return table

    def add(self, action: int, q: float | None = None) -> None:
        self.values[action] = self.q_init if q is None else q

    def __getitem__(self, action: int) -> float:
        try:
            return self.values[action]
        except KeyError:
            raise MissingQ(action) from None

    def __contains__(self, action: int) -> bool:
        return action in self.values

    def __len__(self) -> int:
        return len(self.values)

    def copy(self) -> QTable:
        return QTable(self.alpha, self.gamma, self.epsilon, self.q_init, dict(self.values))


def program_quality(program, qtable: QTable) -> float:
    """Q(p) = prod_i gamma * Q(a_i); the gamma factor favours shorter programs."""
    quality = 1.0
    for step in program.steps:
        quality *= qtable.gamma * qtable[step.action]
    return quality


def _argmax(programs: Sequence, qtable: QTable, rng: np.random.Generator):
    scores = [program_quality(p, qtable) for p in programs]
    best = max(scores)
    tied = [i for i, s in enumerate(scores) if s == best]
    shortest = min(len(programs[i]) for i in tied)
    tied = [i for i in tied if len(programs[i]) == shortest]
    if len(tied) == 1:
        return programs[tied[0]]
    return programs[tied[int(rng.integers(len(tied)))]]


def select_program(
    programs: Sequence,
    qtable: QTable,
    rng: np.random.Generator,
    mode: SelectionMode = SelectionMode.EPSILON_GREEDY,
):
    """Pick an arm: uniform at random with probability epsilon, else the best Q(p).

    Ties on Q(p) go to the shorter program, then uniformly at random.
    """
    if not programs:
        raise EmptyArmSet("no programs to choose from")
    if len(programs) == 1:
        return programs[0]
    if mode is SelectionMode.EPSILON_GREEDY and rng.random() < qtable.epsilon:
        return programs[int(rng.integers(len(programs)))]
    return _argmax(programs, qtable, rng)


def update_q(qtable: QTable, action: int, r: float) -> None:
    q = qtable[action]
    qtable.values[action] = q + qtable.alpha * (r - q)


def cumulative_regret(rewards: Iterable[float], r_star: float = 1.0) -> float:
    return float(sum(r_star - r for r in rewards))
