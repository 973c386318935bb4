"""Command-line entry point: ``pace <subcommand> ...``.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .config import ConfigError, RunConfig, Variant, load_config, parse_overrides
from .dataset import InsufficientRecurrence, InvalidShapeSpec, make_dataset
from .report import MissingMetrics, render_report

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """Reports usage problems by raising, so main() can choose the exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _config_args(p: argparse.ArgumentParser, seed: bool = True) -> None:
    p.add_argument("--config", type=Path, help="TOML config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value (dotted section.key allowed); repeatable")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for independent runs")
    p.add_argument("--steps", type=int)
    p.add_argument("--epochs", type=int)
    if seed:
        p.add_argument("--seed", type=int)
    p.add_argument("--quiet", action="store_true", help="no progress lines")


def build_parser() -> Parser:
    parser = Parser(prog="pace", description="Architect-builder simulator with learned program abstractions")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    ds = sub.add_parser("dataset", help="dataset utilities")
    ds_sub = ds.add_subparsers(dest="action", required=True, parser_class=Parser)
    gen = ds_sub.add_parser("generate", help="build shapes, scenes and split and write them as JSON")
    gen.add_argument("--spec", type=Path, help="shape library JSON (default: the bundled one)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--shapes", type=int, help="keep only the first N shapes")
    gen.add_argument("--out", type=Path, required=True)

    run = sub.add_parser("run", help="one training run")
    _config_args(run)
    run.add_argument("--variant", help="pace | no_abstractions | greedy")
    run.add_argument("--no-checkpoints", action="store_true")

    cmp_ = sub.add_parser("compare", help="variants x seeds with mean and 95%% CI per step")
    _config_args(cmp_, seed=False)
    cmp_.add_argument("--variants", default="pace,no_abstractions,greedy")
    cmp_.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])

    sw = sub.add_parser("sweep", help="adoption sweep at several lexicon sizes")
    _config_args(sw)
    sw.add_argument("--sizes", type=int, nargs="+", default=[2, 8, 15])
    sw.add_argument("--budget", type=int, default=40, help="epochs per arm")
    sw.add_argument("--max-arms", type=int, default=30)
    sw.add_argument("--per-group", type=int, default=3)

    fr = sub.add_parser("frontier", help="best average program length per lexicon size")
    _config_args(fr, seed=False)
    fr.add_argument("--max-size", type=int, default=20)
    fr.add_argument("--pool", type=int, default=200, help="candidates kept in the search pool")
    fr.add_argument("--beam", type=int, default=3)

    qi = sub.add_parser("qinit", help="regret with pessimistic vs optimistic initial Q")
    _config_args(qi, seed=False)
    qi.add_argument("--seeds", type=int, nargs="+", default=list(range(8)))

    rep = sub.add_parser("report", help="render SVG/CSV charts for a run directory")
    rep.add_argument("run_dir", type=Path)
    rep.add_argument("--out", type=Path)
    return parser


def resolve_config(args) -> RunConfig:
    overrides = parse_overrides(args.overrides)
    for name in ("steps", "epochs", "seed", "variant"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return load_config(args.config, overrides)


def _progress(args):
    return None if args.quiet else (lambda line: print(line, flush=True))


def _default_out(kind: str, config: RunConfig) -> Path:
    if kind == "run":
        return Path("runs") / f"{config.variant.value}_seed{config.seed}"
    return Path("runs") / kind


def cmd_dataset(args) -> int:
    dataset = make_dataset(args.spec, seed=args.seed, n_shapes=args.shapes)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    dataset.save(args.out)
    print(f"wrote {args.out}: {len(dataset.shapes)} shapes, {len(dataset.train)} train / "
          f"{len(dataset.test)} test scenes, sha256 {dataset.content_hash()[:16]}")
    return EXIT_OK


def cmd_run(args) -> int:
    config = resolve_config(args)
    out = args.out or _default_out("run", config)
    state = experiments.execute_run(config, out, progress=_progress(args), checkpoints=not args.no_checkpoints)
    last = state.history.steps[-1]
    print(f"done: {out} test_reward {last.test_reward:.3f} complexity {last.avg_complexity:.2f} "
          f"lexicon {len(state.lexicon)}")
    return EXIT_OK


def cmd_compare(args) -> int:
    config = resolve_config(args)
    variants = [Variant.parse(v) for v in args.variants.split(",") if v]
    out = args.out or _default_out("compare", config)
    comparison = experiments.run_baseline_comparison(
        config, variants, args.seeds, out, jobs=args.jobs, verbose=not args.quiet
    )
    for variant, summaries in comparison.runs.items():
        first = experiments.mean_ci([s.steps[0].avg_complexity for s in summaries])
        final = experiments.mean_ci([s.steps[-1].avg_complexity for s in summaries])
        drop = max(experiments.max_drop(s) for s in summaries)
        print(f"{variant}: complexity {first[0]:.2f} -> {final[0]:.2f} +/- {final[1]:.2f}, "
              f"largest post-abstraction reward drop {drop:.3f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = resolve_config(args)
    out = args.out or _default_out("sweep", config)
    arms = experiments.run_adoption_study(
        config, args.sizes, args.budget, args.max_arms, args.per_group, out, args.jobs, progress=_progress(args)
    )
    for size, rate in experiments.adoption_rates(arms).items():
        print(f"lexicon size {size}: adoption rate {rate:.2f}")
    return EXIT_OK


def cmd_frontier(args) -> int:
    config = resolve_config(args)
    out = args.out or _default_out("frontier", config)
    dataset = experiments.dataset_for(config)
    pool = experiments.frontier_pool(dataset, args.pool, config.max_candidate_length)
    programs = [s.canonical_program for s in dataset.train]
    points = experiments.compute_frontier(pool, programs, args.max_size, args.beam)
    experiments.write_manifest(out, config, dataset, "frontier", max_size=args.max_size, pool=args.pool,
                               beam=args.beam)
    experiments.write_frontier(out / "frontier.csv", points)
    for p in points:
        print(f"lexicon size {p.lexicon_size}: best average length {p.best_avg_mdl:.3f}")
    return EXIT_OK


def cmd_qinit(args) -> int:
    config = resolve_config(args)
    out = args.out or _default_out("qinit", config)
    report = experiments.run_qinit_study(config, args.seeds, out_dir=out, jobs=args.jobs)
    for q, (mean, ci) in report.summary().items():
        print(f"q_init={q}: cumulative regret {mean:.1f} +/- {ci:.1f}")
    print(f"one-sided paired p = {report.p_value:.4f}")
    return EXIT_OK


def cmd_report(args) -> int:
    written = render_report(args.run_dir, args.out)
    print(f"wrote {len(written)} files under {written[0].parent if written else args.run_dir}")
    return EXIT_OK


COMMANDS = {
    "dataset": cmd_dataset,
    "run": cmd_run,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "frontier": cmd_frontier,
    "qinit": cmd_qinit,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    np.seterr(over="ignore")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, InvalidShapeSpec, InsufficientRecurrence, FileNotFoundError) as exc:
        if isinstance(exc, MissingMetrics):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - reported and mapped to the runtime exit code
        logging.getLogger(__name__).debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
