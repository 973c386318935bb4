import numpy as np
import pytest

from pace import trainer
from pace.bandit import QTable
from pace.config import RunConfig, Variant
from pace.grid import Grid, PrimitiveBlock, place_block
from pace.symlang import HORIZ, VERT, Lexicon, Program, flatten, prune_table


def test_transitions_add_the_action_blocks():
    lex = Lexicon()
    tower = lex.abstraction([(VERT, (0, 0)), (VERT, (0, 2))])
    lex = lex.with_action(tower)
    program = Program.of((tower.id, (1, 0)), (HORIZ, (3, 0)))
    ts = trainer.program_transitions(program, lex)
    assert len(ts) == 2
    assert ts[0].x == Grid.empty()
    for t, step in zip(ts, program.steps):
        expected = t.x
        for block in flatten(Program((step,)), lex):
            expected = place_block(expected, block)
        assert t.x_next == expected
    assert ts[1].x == ts[0].x_next


def test_no_abstractions_transition_count():
    # 9120 = sum over the 930 training scenes of both shapes' block counts
    state = trainer.init_state(RunConfig(variant=Variant.NO_ABSTRACTIONS, hidden=8))
    arrays, selected = trainer.generate_transition_dataset(state)
    assert len(selected) == 930
    assert len(arrays) == 9120


def test_transition_arrays_match_transitions(tiny_config, tiny_dataset):
    state = trainer.init_state(tiny_config, tiny_dataset)
    arrays, selected = trainer.generate_transition_dataset(state)
    assert len(arrays) == 200
    for t in trainer.transitions_of(arrays)[:50]:
        assert t.x.bits & ~t.x_next.bits == 0
        assert (t.x_next.bits & ~t.x.bits).bit_count() == 2 * len(state.lexicon[t.action].pattern)


def test_same_seed_same_dataset_of_transitions(tiny_config, tiny_dataset):
    a = trainer.init_state(tiny_config, tiny_dataset)
    b = trainer.init_state(tiny_config, tiny_dataset)
    xa, _ = trainer.generate_transition_dataset(a)
    xb, _ = trainer.generate_transition_dataset(b)
    for f in xa._fields:
        np.testing.assert_array_equal(getattr(xa, f), getattr(xb, f))


def test_runs_are_reproducible(tiny_config, tiny_dataset):
    a = trainer.run(tiny_config, tiny_dataset)
    b = trainer.run(tiny_config, tiny_dataset)
    assert a.history.steps == b.history.steps
    assert [e.train_loss for e in a.history.epochs] == [e.train_loss for e in b.history.epochs]
    np.testing.assert_array_equal(a.builder.params, b.builder.params)


def test_lexicon_growth_and_q_domain(tiny_dataset):
    cfg = RunConfig(steps=4, epochs=1, hidden=16, n_shapes=5)
    sizes = []

    def check(state, record):
        sizes.append(len(state.lexicon))
        assert set(state.qtable.values) == {a.id for a in state.lexicon}
        for programs in state.table.values():
            assert 1 <= len(programs)
            for p in programs:
                assert all(a in state.lexicon for a in p.actions())

    trainer.run(cfg, tiny_dataset, on_step=check)
    steps = [2] + sizes
    assert all(0 <= b - a <= 1 for a, b in zip(steps, steps[1:]))


def test_no_abstractions_keeps_primitives(tiny_dataset):
    state = trainer.run(RunConfig(steps=3, epochs=1, hidden=16, n_shapes=5, variant="no_abstractions"), tiny_dataset)
    assert len(state.lexicon) == 2
    complexities = [s.avg_complexity for s in state.history.steps]
    assert complexities == [tiny_dataset.mean_canonical_length(tiny_dataset.train)] * 3


def test_pace_complexity_never_rises(tiny_dataset):
    state = trainer.run(RunConfig(steps=4, epochs=3, hidden=16, n_shapes=5), tiny_dataset)
    c = [s.avg_complexity for s in state.history.steps]
    assert c[0] == pytest.approx(tiny_dataset.mean_canonical_length(tiny_dataset.train))
    assert max(c) <= c[0] + 1e-12


def test_greedy_variant_ignores_q(tiny_dataset, monkeypatch):
    state = trainer.init_state(RunConfig(steps=3, epochs=1, hidden=16, n_shapes=5, variant="greedy"), tiny_dataset)

    def forbidden(*args, **kwargs):
        raise AssertionError("Greedy consulted the Q-table")

    monkeypatch.setattr(trainer, "select_program", forbidden)
    def prune(table, qtable, keep):
        if qtable is state.qtable:
            forbidden()
        return prune_table(table, qtable, keep)

    monkeypatch.setattr(trainer, "prune_table", prune)
    for _ in range(3):
        trainer.run_step(state)
    for sid in state.train_ids:
        chosen = trainer.select_greedy(state, sid)
        assert len(chosen) == min(len(p) for p in state.table[sid])


def test_epoch_with_blind_builder_decays_q(tiny_dataset):
    cfg = RunConfig(epochs=1, hidden=16, n_shapes=5, lr=1e-30, q_init=1.0)
    state = trainer.init_state(cfg, tiny_dataset)
    state.qtable = QTable.for_actions([0, 1], q_init=1.0, alpha=0.5)
    state.builder.params[:] = 0.0
    arrays, _ = trainer.generate_transition_dataset(state)
    metrics = trainer.run_communication_epoch(state, arrays)
    assert metrics.reward == 0.0
    counts = np.bincount(arrays.actions, minlength=2)
    for a in (0, 1):
        assert state.qtable[a] == pytest.approx(0.5 ** counts[a])


def test_loss_decreases_in_smoke_run(tiny_dataset):
    cfg = RunConfig(epochs=40, n_shapes=5)
    state = trainer.init_state(cfg, tiny_dataset)
    state.step = 1
    trainer.communication_phase(state)
    losses = [e.train_loss for e in state.history.epochs]
    rewards = [e.train_reward for e in state.history.epochs]
    assert losses[-1] < 0.5 * losses[0]
    assert all(0.0 <= r <= 1.0 for r in rewards)
    assert rewards[-1] > rewards[0]


def test_perfect_builder_scores_one(tiny_config, tiny_dataset, monkeypatch):
    state = trainer.init_state(tiny_config, tiny_dataset)
    programs = [trainer.select_greedy(state, s.id) for s in tiny_dataset.test]
    truth = state.cache.concat(programs, state.lexicon).y.astype(np.float32)
    monkeypatch.setattr(trainer.neural, "builder_forward", lambda *a, **k: truth)
    assert trainer.evaluate(state).test_reward == 1.0


def test_clone_is_independent(tiny_config, tiny_dataset):
    state = trainer.init_state(tiny_config, tiny_dataset)
    state.step = 1
    trainer.communication_phase(state, 1)
    before = state.builder.params.copy()
    q_before = dict(state.qtable.values)
    clone = state.clone()
    trainer.communication_phase(clone, 1)
    np.testing.assert_array_equal(state.builder.params, before)
    assert state.qtable.values == q_before


def test_clones_with_different_abstractions_do_not_share_transitions(tiny_config, tiny_dataset):
    base = trainer.init_state(tiny_config, tiny_dataset)
    trainer.generate_transition_dataset(base)
    a, b = base.clone(), base.clone()
    trainer.introduce(a, a.lexicon.abstraction([(VERT, (0, 0)), (VERT, (0, 2))]))
    trainer.introduce(b, b.lexicon.abstraction([(HORIZ, (0, 0)), (HORIZ, (0, 1))]))
    same_id = Program.of((2, (0, 0)))
    ta = a.cache.get(same_id, a.lexicon)
    tb = b.cache.get(same_id, b.lexicon)
    assert not np.array_equal(ta.y, tb.y)
