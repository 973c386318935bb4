"""Experiment drivers: recorded runs, baseline comparisons, adoption sweeps,
the efficiency frontier, per-action traces, language composition and the
Q-initialisation regret study.

Every driver writes plain CSV/JSON files so reports can be rebuilt from disk.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import platform
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import __version__, neural, trainer
from .abstraction import Candidate, CorpusScorer, extract_candidates
from .config import RunConfig, Variant
from .dataset import Dataset, Shape, make_dataset
from .symlang import Lexicon, Program, UnknownAction, pattern_key
from .trainer import EpochRecord, RunState, StepRecord

METRIC_COLUMNS = (
    "step",
    "epoch",
    "train_loss",
    "train_reward",
    "test_reward",
    "avg_complexity",
    "lexicon_size",
    "cumulative_regret",
)
STEP_COLUMNS = (
    "step",
    "test_reward",
    "avg_complexity",
    "lexicon_size",
    "introduced",
    "introduced_key",
    "trial_action",
    "trial_usage",
)

Progress = Callable[[str], None]


def dataset_for(config: RunConfig) -> Dataset:
    return make_dataset(
        None if config.shape_spec == "builtin" else config.shape_spec,
        seed=config.dataset_seed,
        n_shapes=config.n_shapes if config.n_shapes != 31 else None,
    )


def write_manifest(out_dir: Path, config: RunConfig, dataset: Dataset, kind: str, **extra) -> dict:
    manifest = {
        "kind": kind,
        "config": config.to_dict(),
        "dataset_hash": dataset.content_hash(),
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "argv": sys.argv,
        **extra,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(round(value, 10))
    return str(value)


class RunRecorder:
    """Streams a run's metrics, Q snapshots, message usage, lexicon and checkpoints to a directory."""

    def __init__(self, out_dir: str | Path, checkpoints: bool = True, progress: Progress | None = None):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.checkpoints = checkpoints
        self.progress = progress
        self._pending: list[EpochRecord] = []
        for name, header in (
            ("metrics.csv", METRIC_COLUMNS),
            ("steps.csv", STEP_COLUMNS),
            ("q_values.csv", ("step", "epoch", "action", "q", "usage")),
            ("messages.csv", ("step", "action", "message", "count")),
        ):
            with (self.out / name).open("w", newline="") as fh:
                csv.writer(fh).writerow(header)
        (self.out / "abstractions.jsonl").write_text("")

    def _append(self, name: str, rows: Iterable[Sequence]) -> None:
        with (self.out / name).open("a", newline="") as fh:
            writer = csv.writer(fh)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])

    def on_epoch(self, record: EpochRecord) -> None:
        self._pending.append(record)
        if self.progress is not None:
            self.progress(
                f"step {record.step} epoch {record.epoch} loss {record.train_loss:.4f} "
                f"reward {record.train_reward:.3f} test_reward {record.test_reward:.3f}"
            )

    def on_step(self, state: RunState, record: StepRecord) -> None:
        epochs, self._pending = self._pending, []
        self._append(
            "metrics.csv",
            (
                (
                    ep.step,
                    ep.epoch,
                    ep.train_loss,
                    ep.train_reward,
                    ep.test_reward,
                    ep.avg_complexity,
                    ep.lexicon_size,
                    ep.cumulative_regret,
                )
                for ep in epochs
            ),
        )
        self._append(
            "q_values.csv",
            ((ep.step, ep.epoch, a, q, ep.usage.get(a, 0)) for ep in epochs for a, q in sorted(ep.q.items())),
        )
        if epochs:
            final = epochs[-1]
            self._append(
                "messages.csv",
                (
                    (final.step, a, m, n)
                    for a, hist in sorted(final.messages.items())
                    for m, n in sorted(hist.items())
                ),
            )
        introduced_key = state.lexicon[record.introduced].key if record.introduced is not None else None
        self._append(
            "steps.csv",
            [
                (
                    record.step,
                    record.test_reward,
                    record.avg_complexity,
                    record.lexicon_size,
                    record.introduced,
                    introduced_key,
                    record.trial_action,
                    record.trial_usage,
                )
            ],
        )
        if record.abstraction is not None:
            with (self.out / "abstractions.jsonl").open("a") as fh:
                fh.write(json.dumps(record.abstraction, sort_keys=True) + "\n")
        (self.out / "lexicon.json").write_text(json.dumps(state.lexicon.to_json(), indent=1) + "\n")
        if self.checkpoints:
            ckpt = self.out / "checkpoints"
            ckpt.mkdir(exist_ok=True)
            neural.save_checkpoint(ckpt / f"step_{record.step:03d}.npz", state.architect, state.builder)
        if self.progress is not None:
            self.progress(
                f"step {record.step} test_reward {record.test_reward:.3f} "
                f"complexity {record.avg_complexity:.2f} lexicon {len(state.lexicon)}"
            )

    def finish(self, state: RunState) -> None:
        programs = trainer.greedy_programs(state)
        data = {str(k): p.to_json() for k, p in sorted(programs.items())}
        (self.out / "programs.json").write_text(json.dumps(data, sort_keys=True) + "\n")
        comp = language_composition(state.lexicon, state.dataset.shapes, programs.values())
        (self.out / "composition.json").write_text(json.dumps(comp, indent=2, sort_keys=True) + "\n")


@dataclass
class RunSummary:
    """Compact, picklable result of one run."""

    variant: str
    seed: int
    steps: list[StepRecord]
    final_lexicon: list
    introduced: dict[int, int]
    composition: dict[str, float]
    out_dir: str | None = None
    epoch_rewards: dict[int, list[float]] = field(default_factory=dict)  # step -> per-epoch test reward

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.steps], dtype=float)


def summarize(state: RunState, out_dir: str | Path | None = None) -> RunSummary:
    programs = trainer.greedy_programs(state)
    return RunSummary(
        variant=state.variant.value,
        seed=state.config.seed,
        steps=list(state.history.steps),
        final_lexicon=state.lexicon.to_json(),
        introduced=dict(state.history.introduced),
        composition=language_composition(state.lexicon, state.dataset.shapes, programs.values()),
        out_dir=str(out_dir) if out_dir is not None else None,
        epoch_rewards=epoch_rewards(state.history),
    )


def epoch_rewards(history: trainer.History) -> dict[int, list[float]]:
    out: dict[int, list[float]] = {}
    for ep in history.epochs:
        out.setdefault(ep.step, []).append(ep.test_reward)
    return out


def execute_run(
    config: RunConfig,
    out_dir: str | Path | None = None,
    dataset: Dataset | None = None,
    progress: Progress | None = None,
    checkpoints: bool = True,
    before_abstraction: Callable | None = None,
) -> RunState:
    """One full run, optionally recorded to ``out_dir``."""
    dataset = dataset if dataset is not None else dataset_for(config)
    recorder = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        write_manifest(out_dir, config, dataset, "run")
        recorder = RunRecorder(out_dir, checkpoints=checkpoints, progress=progress)
    state = trainer.init_state(config, dataset)
    for _ in range(config.steps):
        record = trainer.run_step(
            state,
            on_epoch=recorder.on_epoch if recorder else None,
            before_abstraction=before_abstraction,
        )
        if recorder is not None:
            recorder.on_step(state, record)
        elif progress is not None:
            progress(
                f"[{config.variant.value} seed {config.seed}] step {record.step} "
                f"test_reward {record.test_reward:.3f} complexity {record.avg_complexity:.2f} "
                f"lexicon {len(state.lexicon)}"
            )
    if recorder is not None:
        recorder.finish(state)
    return state


def _run_job(args) -> RunSummary:
    config, out_dir, dataset, verbose = args
    progress = print if verbose else None
    state = execute_run(config, out_dir, dataset, progress=progress)
    return summarize(state, out_dir)


def map_jobs(fn, jobs: Sequence, n_workers: int = 1) -> list:
    """Run independent jobs, in-process or on a process pool; results keep job order."""
    if n_workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(n_workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def mean_ci(values: Sequence[float], z: float = 1.96) -> tuple[float, float]:
    """Mean and half-width of a normal-approximation confidence interval."""
    arr = np.asarray(values, dtype=float)
    if arr.size < 2:
        return float(arr.mean()), 0.0
    return float(arr.mean()), float(z * arr.std(ddof=1) / math.sqrt(arr.size))


def post_abstraction_drops(summary: RunSummary) -> list[float]:
    """For each step that follows an introduction: the end-of-step test reward
    before the introduction minus the lowest per-epoch test reward after it."""
    drops = []
    for prev, cur in zip(summary.steps, summary.steps[1:]):
        if prev.introduced is not None:
            low = min(summary.epoch_rewards.get(cur.step, [cur.test_reward]))
            drops.append(prev.test_reward - low)
    return drops


def max_drop(summary: RunSummary) -> float:
    return max(post_abstraction_drops(summary), default=0.0)


def converged_steps(summary: RunSummary) -> list[bool]:
    """Per step: no action on trial, or the action on trial ended unused by greedy selection."""
    return [s.trial_action is None or s.trial_usage == 0 for s in summary.steps]


@dataclass
class Comparison:
    runs: dict[str, list[RunSummary]]

    def aggregate(self, metric: str) -> dict[str, list[tuple[float, float]]]:
        out = {}
        for variant, summaries in self.runs.items():
            matrix = np.array([s.series(metric) for s in summaries])
            out[variant] = [mean_ci(matrix[:, t]) for t in range(matrix.shape[1])]
        return out

    def rows(self) -> list[tuple]:
        rows = []
        agg = {m: self.aggregate(m) for m in ("avg_complexity", "test_reward")}
        for variant, summaries in self.runs.items():
            for t, step in enumerate(summaries[0].steps):
                c, ci_c = agg["avg_complexity"][variant][t]
                r, ci_r = agg["test_reward"][variant][t]
                rows.append((variant, step.step, c, ci_c, r, ci_r, len(summaries)))
        return rows

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "comparison.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ("variant", "step", "avg_complexity", "avg_complexity_ci", "test_reward", "test_reward_ci", "n_seeds")
            )
            for row in self.rows():
                writer.writerow([_fmt(v) for v in row])


def run_baseline_comparison(
    config: RunConfig,
    variants: Sequence[Variant | str] = tuple(Variant),
    seeds: Sequence[int] = (0, 1, 2),
    out_dir: str | Path | None = None,
    jobs: int = 1,
    dataset: Dataset | None = None,
    verbose: bool = False,
) -> Comparison:
    """Run every variant for every seed and aggregate per-step means with 95% CIs."""
    dataset = dataset if dataset is not None else dataset_for(config)
    variants = [Variant.parse(v) for v in variants]
    work = []
    for variant in variants:
        for seed in seeds:
            cfg = config.replace(variant=variant, seed=seed)
            run_dir = Path(out_dir) / f"{variant.value}_seed{seed}" if out_dir is not None else None
            work.append((cfg, run_dir, dataset, verbose))
    results = map_jobs(_run_job, work, jobs)
    runs: dict[str, list[RunSummary]] = {}
    for summary in results:
        runs.setdefault(summary.variant, []).append(summary)
    comparison = Comparison(runs)
    if out_dir is not None:
        write_manifest(Path(out_dir), config, dataset, "compare", variants=[v.value for v in variants], seeds=list(seeds))
        comparison.write(out_dir)
    return comparison


# ---------------------------------------------------------------- adoption sweep


def frequency_bucket(frequency: int) -> int:
    """Largest power of two not above ``frequency``."""
    if frequency < 1:
        raise ValueError("frequency must be positive")
    return 1 << (int(frequency).bit_length() - 1)


@dataclass
class SweepArm:
    base_lexicon_size: int
    base_step: int
    candidate: Candidate
    group: tuple[int, int]  # (size, frequency bucket)
    adopted: bool = False
    usage: int = 0
    final_complexity: float = float("nan")
    final_lexicon_size: int = 0

    def row(self) -> tuple:
        return (
            self.base_lexicon_size,
            self.base_step,
            self.candidate.text,
            self.group[0],
            self.candidate.frequency,
            self.group[1],
            int(self.adopted),
            self.usage,
            self.final_complexity,
            self.final_lexicon_size,
        )


SWEEP_COLUMNS = (
    "base_lexicon_size",
    "base_step",
    "candidate",
    "size",
    "frequency",
    "frequency_bucket",
    "adopted",
    "usage",
    "final_complexity",
    "final_lexicon_size",
)


def sample_arms(
    candidates: Sequence[Candidate], rng: np.random.Generator, per_group: int = 3, max_arms: int | None = None
) -> list[tuple[Candidate, tuple[int, int]]]:
    """Up to ``per_group`` candidates from each (size, frequency bucket) group, capped at ``max_arms``."""
    groups: dict[tuple[int, int], list[Candidate]] = {}
    for cand in sorted(candidates, key=lambda c: c.key):
        groups.setdefault((cand.size, frequency_bucket(cand.frequency)), []).append(cand)
    picked = []
    for key in sorted(groups):
        members = groups[key]
        idx = rng.choice(len(members), size=min(per_group, len(members)), replace=False)
        picked.extend((members[i], key) for i in sorted(idx))
    if max_arms is not None and len(picked) > max_arms:
        keep = sorted(rng.choice(len(picked), size=max_arms, replace=False))
        picked = [picked[i] for i in keep]
    return picked


def run_arm(base: RunState, arm: SweepArm, budget_epochs: int) -> SweepArm:
    """Inject the arm's candidate into a private clone of ``base`` and train for the budget."""
    state = base.clone()
    action = arm.candidate.to_action(state.lexicon)
    trainer.introduce(state, action)
    state.step += 1
    trainer.communication_phase(state, budget_epochs)
    usage = trainer.greedy_usage(state)
    arm.usage = usage[action.id]
    arm.adopted = arm.usage > 0
    arm.final_complexity = trainer.evaluate(state).avg_complexity
    arm.final_lexicon_size = len(state.lexicon)
    return arm


def _arm_job(args) -> SweepArm:
    base, arm, budget = args
    return run_arm(base, arm, budget)


def run_adoption_sweep(
    state: RunState,
    budget_epochs: int = 40,
    rng: np.random.Generator | None = None,
    per_group: int = 3,
    max_arms: int | None = None,
    jobs: int = 1,
) -> list[SweepArm]:
    """Sweep arms from a snapshot taken just before an abstraction phase.

    The snapshot itself is never modified.
    """
    rng = rng if rng is not None else np.random.default_rng(state.config.seed)
    base = state.clone()
    preferred = trainer.prepare_abstraction(base)
    candidates = extract_candidates(preferred, base.lexicon, base.config.max_candidate_length)
    picked = sample_arms(candidates, rng, per_group, max_arms)
    arms = [SweepArm(len(base.lexicon), base.step, cand, group) for cand, group in picked]
    return map_jobs(_arm_job, [(base, arm, budget_epochs) for arm in arms], jobs)


def adoption_rates(arms: Sequence[SweepArm]) -> dict[int, float]:
    by_size: dict[int, list[bool]] = {}
    for arm in arms:
        by_size.setdefault(arm.base_lexicon_size, []).append(arm.adopted)
    return {size: float(np.mean(flags)) for size, flags in sorted(by_size.items())}


def collect_snapshots(
    config: RunConfig, sizes: Sequence[int], dataset: Dataset | None = None, progress: Progress | None = None
) -> dict[int, RunState]:
    """Run PACE and keep a clone just before the first abstraction phase at each lexicon size >= target."""
    targets = sorted(sizes)
    snapshots: dict[int, RunState] = {}

    def grab(state: RunState) -> None:
        for target in targets:
            if target not in snapshots and len(state.lexicon) >= target:
                snapshots[target] = state.clone()

    state = trainer.init_state(config.replace(variant=Variant.PACE), dataset)
    for _ in range(config.steps):
        record = trainer.run_step(state, before_abstraction=grab)
        if progress is not None:
            progress(f"snapshot run step {record.step} lexicon {len(state.lexicon)}")
        if len(snapshots) == len(targets):
            break
    return snapshots


def run_adoption_study(
    config: RunConfig,
    sizes: Sequence[int] = (2, 8, 15),
    budget_epochs: int = 40,
    max_arms: int = 30,
    per_group: int = 3,
    out_dir: str | Path | None = None,
    jobs: int = 1,
    dataset: Dataset | None = None,
    progress: Progress | None = None,
) -> list[SweepArm]:
    """Snapshots at several lexicon sizes, then an adoption sweep from each (arms split evenly)."""
    dataset = dataset if dataset is not None else dataset_for(config)
    snapshots = collect_snapshots(config, sizes, dataset, progress)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x5EE9]))
    per_size = max_arms // max(len(sizes), 1)
    arms: list[SweepArm] = []
    for target in sorted(snapshots):
        found = run_adoption_sweep(snapshots[target], budget_epochs, rng, per_group, per_size, jobs)
        if progress is not None:
            rate = np.mean([a.adopted for a in found]) if found else float("nan")
            progress(f"lexicon size {len(snapshots[target].lexicon)}: {len(found)} arms, adoption {rate:.2f}")
        arms.extend(found)
    if out_dir is not None:
        out = Path(out_dir)
        write_manifest(
            out, config, dataset, "sweep", sizes=list(sizes), budget_epochs=budget_epochs, max_arms=max_arms
        )
        write_sweep(out / "sweep.csv", arms)
    return arms


def write_sweep(path: str | Path, arms: Sequence[SweepArm]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for arm in arms:
            writer.writerow([_fmt(v) for v in arm.row()])


# ---------------------------------------------------------------- efficiency frontier


@dataclass(frozen=True)
class FrontierPoint:
    lexicon_size: int
    best_avg_mdl: float
    keys: tuple[str, ...] = ()


def compute_frontier(
    candidate_pool: Sequence[Candidate],
    programs: Sequence[Program],
    max_size: int,
    beam: int = 3,
) -> list[FrontierPoint]:
    """Best mean MDL reachable with each lexicon size, grown by beam search over the pool.

    ``programs`` are written with primitives only; pool candidates must expand
    to primitives as well.
    """
    programs = list(programs)
    if not programs:
        raise ValueError("no programs")
    n = len(programs)
    base = Lexicon()
    scorer = CorpusScorer(programs, base)
    start = (-scorer.baseline, ())
    points = [FrontierPoint(len(base), -scorer.baseline / n)]
    frontier: list[tuple[float, tuple[int, ...]]] = [start]
    for size in range(len(base) + 1, max_size + 1):
        options: dict[tuple[int, ...], float] = {}
        for _, chosen in frontier:
            lexicon = base
            for i in chosen:
                lexicon = lexicon.with_action(candidate_pool[i].to_action(lexicon))
            rest = [i for i in range(len(candidate_pool)) if i not in chosen]
            if not rest:
                continue
            scores = CorpusScorer(programs, lexicon).scores([candidate_pool[i] for i in rest])
            for i, score in zip(rest, scores):
                key = tuple(sorted(chosen + (i,)))
                options[key] = min(options.get(key, math.inf), -score)
        if not options:
            break
        ranked = sorted(options.items(), key=lambda kv: (kv[1], kv[0]))[:beam]
        frontier = [(cost, key) for key, cost in ranked]
        cost, key = frontier[0]
        points.append(FrontierPoint(size, cost / n, tuple(candidate_pool[i].text for i in key)))
    return points


def frontier_pool(dataset: Dataset, pool_size: int = 200, max_length: int = 6) -> list[Candidate]:
    """The most frequent candidates mined from the canonical training programs."""
    canonical = {s.id: s.canonical_program for s in dataset.train}
    candidates = extract_candidates(canonical, Lexicon(), max_length)
    candidates.sort(key=lambda c: (-c.frequency, c.size, c.key))
    return candidates[:pool_size]


def write_frontier(path: str | Path, points: Sequence[FrontierPoint]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("lexicon_size", "best_avg_mdl", "actions"))
        for p in points:
            writer.writerow((p.lexicon_size, _fmt(p.best_avg_mdl), " ".join(p.keys)))


# ---------------------------------------------------------------- traces and composition


def trace_abstraction(history: trainer.History, action_id: int) -> list[dict]:
    """Per-epoch Q-value and selection count of one action, from its introduction on."""
    out = []
    for ep in history.epochs:
        if action_id in ep.q:
            out.append({"step": ep.step, "epoch": ep.epoch, "q": ep.q[action_id], "usage": ep.usage.get(action_id, 0)})
    if not out:
        raise UnknownAction(action_id)
    return out


def read_trace(q_values_csv: str | Path, action_id: int) -> list[dict]:
    """Same series as ``trace_abstraction``, read back from a run's q_values.csv."""
    out = []
    with Path(q_values_csv).open() as fh:
        for row in csv.DictReader(fh):
            if int(row["action"]) == action_id:
                out.append(
                    {"step": int(row["step"]), "epoch": int(row["epoch"]), "q": float(row["q"]), "usage": int(row["usage"])}
                )
    if not out:
        raise UnknownAction(action_id)
    return out


def classify_action(action, shape_footprints: set) -> str:
    if action.is_primitive:
        return "primitive"
    if action.footprint in shape_footprints:
        return "shape"
    return "subshape"


def language_composition(lexicon: Lexicon, shapes: Sequence[Shape], programs: Iterable[Program]) -> dict[str, float]:
    """Occurrence-weighted share of primitives, whole shapes and sub-shapes in the given programs."""
    footprints = {s.footprint for s in shapes}
    counts: Counter = Counter()
    for program in programs:
        for step in program.steps:
            counts[classify_action(lexicon[step.action], footprints)] += 1
    total = sum(counts.values())
    if total == 0:
        raise ValueError("no programs")
    return {k: counts[k] / total for k in ("primitive", "shape", "subshape")}


# ---------------------------------------------------------------- Q-initialisation study


TOWER_EXPANSION = ((1, (0, 0)), (1, (0, 2)))


@dataclass
class QInitArm:
    seed: int
    q_init: float
    regret: list[float]  # cumulative regret after each epoch, counted from the injection

    @property
    def total(self) -> float:
        return self.regret[-1] if self.regret else 0.0


@dataclass
class QInitReport:
    arms: list[QInitArm]
    p_value: float
    q_inits: tuple[float, float]

    def totals(self, q_init: float) -> list[float]:
        return [a.total for a in self.arms if a.q_init == q_init]

    def summary(self) -> dict[float, tuple[float, float]]:
        return {q: mean_ci(self.totals(q)) for q in self.q_inits}


def paired_permutation_pvalue(a: Sequence[float], b: Sequence[float]) -> float:
    """One-sided exact sign-flip test of mean(a - b) < 0."""
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    observed = diff.mean()
    signs = np.array(list(itertools.product((1.0, -1.0), repeat=len(diff))))
    means = (signs * np.abs(diff)).mean(axis=1)
    return float(np.mean(means <= observed + 1e-12))


def qinit_arm(base: RunState, action, q_init: float, epochs: int) -> QInitArm:
    state = base.clone()
    trainer.introduce(state, action)
    state.qtable.values[action.id] = q_init
    state.step += 1
    start = state.regret
    regret = []
    trainer.communication_phase(state, epochs, on_epoch=lambda rec: regret.append(rec.cumulative_regret - start))
    return QInitArm(state.config.seed, q_init, regret)


def _qinit_seed_job(args) -> list[QInitArm]:
    config, dataset, expansion, q_inits, epochs = args
    state = trainer.init_state(config, dataset)
    state.step = 1
    trainer.communication_phase(state)
    trainer.prepare_abstraction(state)
    action = state.lexicon.abstraction(expansion)
    return [qinit_arm(state, action, q, epochs) for q in q_inits]


def run_qinit_study(
    config: RunConfig,
    seeds: Sequence[int] = tuple(range(8)),
    q_inits: tuple[float, float] = (0.0, 1.0),
    epochs: int | None = None,
    expansion=TOWER_EXPANSION,
    out_dir: str | Path | None = None,
    jobs: int = 1,
    dataset: Dataset | None = None,
) -> QInitReport:
    """Regret after injecting one abstraction with each initial Q-value.

    Per seed, one PACE state is trained through the first communication
    phase; both arms then start from clones of that same state.
    """
    dataset = dataset if dataset is not None else dataset_for(config)
    epochs = epochs or config.epochs
    work = [(config.replace(seed=s, variant=Variant.PACE), dataset, expansion, q_inits, epochs) for s in seeds]
    arms = [arm for result in map_jobs(_qinit_seed_job, work, jobs) for arm in result]
    lo = [a.total for a in arms if a.q_init == q_inits[0]]
    hi = [a.total for a in arms if a.q_init == q_inits[1]]
    report = QInitReport(arms, paired_permutation_pvalue(lo, hi), tuple(q_inits))
    if out_dir is not None:
        out = Path(out_dir)
        write_manifest(out, config, dataset, "qinit", seeds=list(seeds), q_inits=list(q_inits), epochs=epochs,
                       injected=pattern_key(Lexicon().abstraction(expansion).pattern), p_value=report.p_value)
        with (out / "qinit.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("seed", "q_init", "epoch", "cumulative_regret"))
            for arm in arms:
                for i, r in enumerate(arm.regret, start=1):
                    writer.writerow((arm.seed, _fmt(arm.q_init), i, _fmt(r)))
    return report


def summary_dict(summary: RunSummary) -> dict:
    data = asdict(summary)
    data["steps"] = [asdict(s) for s in summary.steps]
    return data
