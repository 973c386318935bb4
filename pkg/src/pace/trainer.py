"""Training loop: communication phases, evaluation and abstraction phases.

One *step* is ``epochs`` communication epochs, each followed by a frozen
evaluation on the held-out scenes, and then (unless the variant forbids it)
one abstraction phase.  The step's reward and complexity are those of its
final epoch.  Each epoch selects one program per training scene, breaks the chosen programs into
``(x, a, x')`` transitions and plays the signalling game on them in batches.
"""

from __future__ import annotations

import copy
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import neural
from .abstraction import Selection, apply_abstraction, extract_candidates, rank_candidates
from .bandit import QTable, SelectionMode, select_program
from .config import RunConfig, Variant
from .dataset import Dataset, Scene, make_dataset
from .grid import NUM_CELLS, Cell, Grid
from .symlang import Action, Lexicon, Program, ProgramTable, prune_table

log = logging.getLogger(__name__)


class Transition(NamedTuple):
    x: Grid
    action: int
    anchor: Cell
    x_next: Grid


def program_transitions(program: Program, lexicon: Lexicon) -> list[Transition]:
    out = []
    bits = 0
    for step in program.steps:
        added = 0
        for o, c, r in lexicon[step.action].pattern:
            c += step.anchor.col
            r += step.anchor.row
            added |= 1 << (r * 9 + c)
            added |= 1 << (r * 9 + c + (1 if o == 0 else 9))
        out.append(Transition(Grid(bits), step.action, step.anchor, Grid(bits | added)))
        bits |= added
    return out


def _bits_matrix(values: Sequence[int]) -> np.ndarray:
    raw = b"".join(v.to_bytes(11, "little") for v in values)
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
    return bits.reshape(len(values), 88)[:, :NUM_CELLS]


class TransitionArrays(NamedTuple):
    x: np.ndarray  # (n, 81) uint8
    actions: np.ndarray
    anchors: np.ndarray  # cell index of the anchor
    y: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)

    def take(self, idx) -> TransitionArrays:
        return TransitionArrays(self.x[idx], self.actions[idx], self.anchors[idx], self.y[idx])


class TransitionCache:
    """Per-program transition arrays, keyed by program.

    Clones share one cache while their lexicons agree.  A state that adds an
    action must switch to ``fork()`` first, because a sibling clone may give
    the same id a different meaning.
    """

    def __init__(self, store: dict | None = None):
        self._store: dict[Program, TransitionArrays] = {} if store is None else store

    def fork(self) -> TransitionCache:
        return TransitionCache(dict(self._store))

    def get(self, program: Program, lexicon: Lexicon) -> TransitionArrays:
        arrays = self._store.get(program)
        if arrays is None:
            ts = program_transitions(program, lexicon)
            arrays = TransitionArrays(
                _bits_matrix([t.x.bits for t in ts]),
                np.array([t.action for t in ts], dtype=np.int64),
                np.array([t.anchor.index for t in ts], dtype=np.int64),
                _bits_matrix([t.x_next.bits for t in ts]),
            )
            self._store[program] = arrays
        return arrays

    def concat(self, programs: Sequence[Program], lexicon: Lexicon) -> TransitionArrays:
        parts = [self.get(p, lexicon) for p in programs]
        return TransitionArrays(*(np.concatenate([getattr(p, f) for p in parts]) for f in TransitionArrays._fields))


@dataclass
class EpochRecord:
    step: int
    epoch: int
    train_loss: float
    train_reward: float
    lexicon_size: int
    cumulative_regret: float
    n_transitions: int
    q: dict[int, float]
    usage: dict[int, int]
    action_reward: dict[int, float]
    messages: dict[int, dict[int, int]]
    test_reward: float = float("nan")
    avg_complexity: float = float("nan")


@dataclass
class StepRecord:
    step: int
    test_reward: float
    avg_complexity: float
    lexicon_size: int
    greedy_usage: dict[int, int]
    trial_action: int | None = None
    trial_usage: int | None = None
    introduced: int | None = None
    abstraction: dict | None = None


@dataclass
class History:
    epochs: list[EpochRecord] = field(default_factory=list)
    steps: list[StepRecord] = field(default_factory=list)
    introduced: dict[int, int] = field(default_factory=dict)  # action id -> step it was added


@dataclass
class RunState:
    config: RunConfig
    dataset: Dataset
    lexicon: Lexicon
    table: ProgramTable
    qtable: QTable
    architect: neural.DenseNet
    builder: neural.DenseNet
    opt_architect: neural.Adam
    opt_builder: neural.Adam
    rngs: dict[str, np.random.Generator]
    history: History = field(default_factory=History)
    step: int = 0
    regret: float = 0.0
    cache: TransitionCache = field(default_factory=TransitionCache)

    @property
    def variant(self) -> Variant:
        return self.config.variant

    @property
    def train_ids(self) -> list[int]:
        return [s.id for s in self.dataset.train]

    def clone(self) -> RunState:
        """Independent copy; the transition cache and immutable data are shared."""
        return RunState(
            config=self.config,
            dataset=self.dataset,
            lexicon=self.lexicon,
            table={k: list(v) for k, v in self.table.items()},
            qtable=self.qtable.copy(),
            architect=copy.deepcopy(self.architect),
            builder=copy.deepcopy(self.builder),
            opt_architect=self.opt_architect.copy(),
            opt_builder=self.opt_builder.copy(),
            rngs={k: copy.deepcopy(g) for k, g in self.rngs.items()},
            history=copy.deepcopy(self.history),
            step=self.step,
            regret=self.regret,
            cache=self.cache,
        )


RNG_STREAMS = ("init", "bandit", "shuffle", "gumbel", "eval")


def init_state(config: RunConfig, dataset: Dataset | None = None) -> RunState:
    if dataset is None:
        dataset = make_dataset(
            None if config.shape_spec == "builtin" else config.shape_spec,
            seed=config.dataset_seed,
            n_shapes=config.n_shapes if config.n_shapes != 31 else None,
        )
    seeds = np.random.SeedSequence(config.seed).spawn(len(RNG_STREAMS))
    rngs = {name: np.random.default_rng(s) for name, s in zip(RNG_STREAMS, seeds)}
    lexicon = Lexicon()
    qtable = QTable.for_actions(
        (a.id for a in lexicon),
        alpha=config.alpha,
        gamma=config.gamma,
        epsilon=config.epsilon,
        q_init=config.q_init,
    )
    architect = neural.make_architect(rngs["init"], config.n_cap, config.hidden, config.vocab)
    builder = neural.make_builder(rngs["init"], config.hidden, config.vocab)
    return RunState(
        config=config,
        dataset=dataset,
        lexicon=lexicon,
        table={s.id: [s.canonical_program] for s in dataset.scenes},
        qtable=qtable,
        architect=architect,
        builder=builder,
        opt_architect=neural.Adam(architect.params.size, lr=config.lr),
        opt_builder=neural.Adam(builder.params.size, lr=config.lr),
        rngs=rngs,
    )


def _shortest(programs: Sequence[Program], rng: np.random.Generator | None) -> Program:
    n = min(len(p) for p in programs)
    tied = [p for p in programs if len(p) == n]
    if len(tied) == 1 or rng is None:
        return tied[0]
    return tied[int(rng.integers(len(tied)))]


def select_for_training(state: RunState, scene_id: int) -> Program:
    programs = state.table[scene_id]
    if state.variant is Variant.NO_ABSTRACTIONS:
        return state.dataset.scene(scene_id).canonical_program
    if state.variant is Variant.GREEDY:
        return _shortest(programs, state.rngs["bandit"])
    return select_program(programs, state.qtable, state.rngs["bandit"], SelectionMode.EPSILON_GREEDY)


def select_greedy(state: RunState, scene_id: int, rng: np.random.Generator | None = None) -> Program:
    """The exploitation choice: argmax Q(p) for PACE, the shortest program for Greedy."""
    programs = state.table[scene_id]
    rng = rng if rng is not None else state.rngs["eval"]
    if state.variant is Variant.NO_ABSTRACTIONS:
        return state.dataset.scene(scene_id).canonical_program
    if state.variant is Variant.GREEDY:
        return _shortest(programs, rng)
    return select_program(programs, state.qtable, rng, SelectionMode.GREEDY)


def greedy_programs(state: RunState, scene_ids: Sequence[int] | None = None) -> dict[int, Program]:
    ids = state.train_ids if scene_ids is None else scene_ids
    return {sid: select_greedy(state, sid) for sid in ids}


def generate_transition_dataset(state: RunState) -> tuple[TransitionArrays, dict[int, Program]]:
    """One bandit choice per training scene, broken into shuffled transitions."""
    selected = {sid: select_for_training(state, sid) for sid in state.train_ids}
    arrays = state.cache.concat(list(selected.values()), state.lexicon)
    order = state.rngs["shuffle"].permutation(len(arrays))
    return arrays.take(order), selected


def transitions_of(arrays: TransitionArrays) -> list[Transition]:
    def grid(row) -> Grid:
        return Grid.from_array(row)

    return [
        Transition(grid(arrays.x[i]), int(arrays.actions[i]), Cell.from_index(int(arrays.anchors[i])), grid(arrays.y[i]))
        for i in range(len(arrays))
    ]


@dataclass
class EpochMetrics:
    loss: float
    reward: float
    action_reward: dict[int, float]
    rewards: np.ndarray
    messages: dict[int, dict[int, int]]


def run_communication_epoch(state: RunState, arrays: TransitionArrays) -> EpochMetrics:
    """Play the signalling game over every transition once, updating nets and Q-values."""
    cfg = state.config
    n = len(arrays)
    if n == 0:
        raise ValueError("no transitions to train on")
    rewards = np.empty(n)
    messages = np.empty(n, dtype=np.int64)
    losses = []
    q = state.qtable.values
    alpha = state.qtable.alpha
    gumbel = state.rngs["gumbel"]
    for start in range(0, n, cfg.batch):
        stop = min(start + cfg.batch, n)
        actions = arrays.actions[start:stop]
        x = arrays.x[start:stop].astype(np.float32)
        y = arrays.y[start:stop].astype(np.float32)
        noise = neural.sample_gumbel((stop - start, cfg.vocab), gumbel).astype(np.float32)
        result = neural.loss_and_grads(
            state.architect,
            state.builder,
            actions,
            arrays.anchors[start:stop],
            x,
            y,
            noise,
            temperature=cfg.temperature,
            hard=True,
            lam_ps=cfg.lam_ps,
            beta=cfg.beta_ps,
        )
        neural.adam_step(state.opt_architect, state.architect.params, result.architect_grad)
        neural.adam_step(state.opt_builder, state.builder.params, result.builder_grad)
        r = neural.exact_match(result.probs, y)
        rewards[start:stop] = r
        messages[start:stop] = result.messages.argmax(axis=1)
        losses.append(result.loss * (stop - start))
        for a, ri in zip(actions.tolist(), r.tolist()):
            q[a] += alpha * (ri - q[a])
    totals = np.bincount(arrays.actions, weights=rewards)
    counts = np.bincount(arrays.actions)
    action_reward = {int(a): float(totals[a] / counts[a]) for a in np.flatnonzero(counts)}
    hist: dict[int, dict[int, int]] = {}
    for a, m in Counter(zip(arrays.actions.tolist(), messages.tolist())).items():
        hist.setdefault(a[0], {})[a[1]] = m
    return EpochMetrics(float(np.sum(losses) / n), float(rewards.mean()), action_reward, rewards, hist)


def run_epoch(state: RunState, epoch: int) -> EpochRecord:
    arrays, selected = generate_transition_dataset(state)
    metrics = run_communication_epoch(state, arrays)
    state.regret += float(np.sum(1.0 - metrics.rewards))
    usage = Counter(a for p in selected.values() for a in p.actions())
    ev = evaluate(state)
    record = EpochRecord(
        step=state.step,
        epoch=epoch,
        train_loss=metrics.loss,
        train_reward=metrics.reward,
        lexicon_size=len(state.lexicon),
        cumulative_regret=state.regret,
        n_transitions=len(arrays),
        q=dict(state.qtable.values),
        usage={a.id: usage.get(a.id, 0) for a in state.lexicon},
        action_reward=metrics.action_reward,
        messages=metrics.messages,
        test_reward=ev.test_reward,
        avg_complexity=ev.avg_complexity,
    )
    state.history.epochs.append(record)
    return record


def communication_phase(state: RunState, epochs: int | None = None, on_epoch: Callable | None = None) -> None:
    for epoch in range(1, (epochs or state.config.epochs) + 1):
        record = run_epoch(state, epoch)
        if on_epoch is not None:
            on_epoch(record)


@dataclass
class Evaluation:
    test_reward: float
    avg_complexity: float


def evaluate(state: RunState, scenes: Sequence[Scene] | None = None) -> Evaluation:
    """Greedy programs and argmax messages; no parameter or Q updates."""
    scenes = state.dataset.test if scenes is None else scenes
    programs = [select_greedy(state, s.id) for s in scenes]
    arrays = state.cache.concat(programs, state.lexicon)
    _, message = neural.architect_forward(state.architect, arrays.actions, train=False)
    probs = neural.builder_forward(state.builder, arrays.x.astype(np.float32), message, arrays.anchors)
    reward = float(neural.exact_match(probs, arrays.y.astype(np.float32)).mean())
    complexity = float(np.mean([len(p) for p in greedy_programs(state).values()]))
    return Evaluation(reward, complexity)


def greedy_usage(state: RunState) -> dict[int, int]:
    usage = Counter(a for p in greedy_programs(state).values() for a in p.actions())
    return {a.id: usage.get(a.id, 0) for a in state.lexicon}


def _uniform_quality(lexicon: Lexicon, gamma: float) -> QTable:
    return QTable.for_actions((a.id for a in lexicon), gamma=gamma, q_init=1.0)


def prepare_abstraction(state: RunState) -> dict[int, Program]:
    """Prune the table and return the preferred (greedy) program per training scene."""
    qtable = state.qtable
    if state.variant is Variant.GREEDY:
        # ranks purely by length so Greedy never looks at learned Q-values
        qtable = _uniform_quality(state.lexicon, state.config.gamma)
    state.table = prune_table(state.table, qtable, state.config.prune_keep)
    return greedy_programs(state)


def introduce(state: RunState, action: Action) -> None:
    """Add ``action`` to the lexicon, rewrite the table with it and give it a fresh Q-value."""
    if action.id >= state.config.n_cap:
        raise neural.ActionIdOverflow(f"lexicon is full ({state.config.n_cap} actions)")
    state.cache = state.cache.fork()
    state.lexicon = state.lexicon.with_action(action)
    state.table = apply_abstraction(state.table, action, state.lexicon)
    state.qtable.add(action.id)
    state.history.introduced[action.id] = state.step


def abstraction_phase(state: RunState) -> tuple[Selection, Action | None]:
    preferred = prepare_abstraction(state)
    candidates = extract_candidates(preferred, state.lexicon, state.config.max_candidate_length)
    selection = rank_candidates(candidates, preferred, state.lexicon)
    if not selection.improves or state.lexicon.next_id >= state.config.n_cap:
        return selection, None
    action = selection.candidate.to_action(state.lexicon)
    introduce(state, action)
    return selection, action


def run_step(state: RunState, on_epoch: Callable | None = None, before_abstraction: Callable | None = None) -> StepRecord:
    state.step += 1
    communication_phase(state, on_epoch=on_epoch)
    last = state.history.epochs[-1]
    ev = Evaluation(last.test_reward, last.avg_complexity)
    usage = greedy_usage(state)
    trial = max(state.history.introduced, default=None)
    if trial is not None and state.history.introduced[trial] != state.step - 1:
        trial = None
    record = StepRecord(
        step=state.step,
        test_reward=ev.test_reward,
        avg_complexity=ev.avg_complexity,
        lexicon_size=len(state.lexicon),
        greedy_usage=usage,
        trial_action=trial,
        trial_usage=usage.get(trial) if trial is not None else None,
    )
    if before_abstraction is not None:
        before_abstraction(state)
    if state.variant is not Variant.NO_ABSTRACTIONS:
        selection, action = abstraction_phase(state)
        cand = selection.candidate
        record.introduced = action.id if action is not None else None
        record.abstraction = {
            "step": state.step,
            "chosen_key": cand.text if action is not None else None,
            "size": cand.size if action is not None else None,
            "frequency": cand.frequency if action is not None else None,
            "score": selection.score,
            "baseline": selection.baseline,
            "skipped": action is None,
        }
    state.history.steps.append(record)
    log.info(
        "step %d: test_reward=%.3f complexity=%.2f lexicon=%d",
        record.step,
        record.test_reward,
        record.avg_complexity,
        len(state.lexicon),
    )
    return record


def run(config: RunConfig, dataset: Dataset | None = None, on_step: Callable | None = None, **hooks) -> RunState:
    state = init_state(config, dataset)
    for _ in range(config.steps):
        record = run_step(state, **hooks)
        if on_step is not None:
            on_step(state, record)
    return state
