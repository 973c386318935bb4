import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import binom

from pace.bandit import (
    EmptyArmSet,
    MissingQ,
    QTable,
    SelectionMode,
    cumulative_regret,
    program_quality,
    select_program,
    update_q,
)
from pace.symlang import Program


def prog(*actions):
    return Program(tuple((a, (i, 0)) for i, a in enumerate(actions)))


def test_quality_is_discounted_product():
    q = QTable(gamma=0.9, values={0: 0.5, 1: 0.8})
    assert program_quality(prog(0, 1, 1), q) == pytest.approx(0.9**3 * 0.5 * 0.8 * 0.8)


def test_missing_q_raises():
    with pytest.raises(MissingQ):
        program_quality(prog(7), QTable())


def test_empty_arm_set():
    with pytest.raises(EmptyArmSet):
        select_program([], QTable(), np.random.default_rng(0))


def test_greedy_picks_best_then_shorter():
    q = QTable(values={0: 1.0, 1: 1.0, 2: 0.2})
    short, long, bad = prog(0, 1), prog(0, 1, 1), prog(2)
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert select_program([long, short, bad], q, rng, SelectionMode.GREEDY) is short


def test_equal_quality_equal_length_ties_are_uniform():
    q = QTable(gamma=1.0, values={0: 1.0, 1: 1.0})
    arms = [prog(0, 1), prog(1, 0)]
    rng = np.random.default_rng(0)
    n = 4000
    first = sum(select_program(arms, q, rng, SelectionMode.GREEDY) is arms[0] for _ in range(n))
    lo, hi = binom.ppf([0.0005, 0.9995], n, 0.5)
    assert lo <= first <= hi


def test_epsilon_greedy_explores_at_rate_epsilon():
    q = QTable(epsilon=0.1, values={0: 1.0, 1: 0.0})
    good, bad = prog(0), prog(1)
    rng = np.random.default_rng(1)
    n = 20000
    picks_bad = sum(select_program([good, bad], q, rng) is bad for _ in range(n))
    # a random draw lands on the bad arm half the time
    lo, hi = binom.ppf([0.0005, 0.9995], n, 0.05)
    assert lo <= picks_bad <= hi


def test_single_arm_consumes_no_randomness():
    rng = np.random.default_rng(3)
    state = rng.bit_generator.state
    select_program([prog(0)], QTable(values={0: 0.0}), rng)
    assert rng.bit_generator.state == state


@given(
    st.floats(0.01, 1.0),
    st.floats(0.0, 1.0),
    st.lists(st.sampled_from([0.0, 1.0]), min_size=1, max_size=40),
)
def test_update_is_exponential_moving_average(alpha, q0, rewards):
    q = QTable(alpha=alpha, values={0: q0})
    for r in rewards:
        update_q(q, 0, r)
    # closed form of the moving average
    n = len(rewards)
    expected = (1 - alpha) ** n * q0 + sum(
        alpha * (1 - alpha) ** (n - 1 - i) * r for i, r in enumerate(rewards)
    )
    assert q[0] == pytest.approx(expected, abs=1e-12)
    assert 0.0 <= q[0] <= 1.0


def test_update_converges_to_constant_reward():
    q = QTable(alpha=0.5, values={0: 0.0})
    for _ in range(60):
        update_q(q, 0, 1.0)
    assert math.isclose(q[0], 1.0, abs_tol=1e-12)


def test_regret():
    assert cumulative_regret([1, 0, 0.5]) == pytest.approx(1.5)


def test_for_actions_and_copy():
    q = QTable.for_actions([0, 1], q_init=1.0)
    assert q[0] == q[1] == 1.0
    c = q.copy()
    c.values[0] = 0.0
    assert q[0] == 1.0
    q.add(2)
    assert q[2] == 1.0
    q.add(3, 0.25)
    assert q[3] == 0.25
