"""Static report: SVG line charts, their backing CSVs, and scene/program renders.

Output depends only on the files in the run directory, so re-rendering gives
byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

from .config import RunConfig
from .grid import SIZE, Grid
from .symlang import Lexicon, Program, flatten

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2")
WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=64, right=150, top=36, bottom=48)


class MissingMetrics(FileNotFoundError):
    pass


def _num(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".") if x == x else "0"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def _bounds(values: Sequence[float], pad: float = 0.05) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    span = hi - lo
    return lo - pad * span, hi + pad * span


def line_chart(
    series: dict[str, list[tuple[float, float]]],
    title: str,
    xlabel: str,
    ylabel: str,
    bands: dict[str, list[float]] | None = None,
    markers: bool = True,
    scatter: dict[str, list[tuple[float, float]]] | None = None,
) -> str:
    """Minimal SVG line chart.  Each series point becomes one polyline vertex
    (and, with ``markers``, one circle); ``bands`` gives a +/- half-width per point."""
    scatter = scatter or {}
    xs = [x for pts in list(series.values()) + list(scatter.values()) for x, _ in pts]
    ys = [y for pts in list(series.values()) + list(scatter.values()) for _, y in pts]
    for name, half in (bands or {}).items():
        ys += [y + h for (_, y), h in zip(series[name], half)] + [y - h for (_, y), h in zip(series[name], half)]
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = _bounds(xs, 0.0) if min(xs) != max(xs) else (min(xs) - 1, max(xs) + 1)
    y0, y1 = _bounds(ys)
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(x: float) -> float:
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def py(y: float) -> float:
        return MARGIN["top"] + (1 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for t in _ticks(x0, x1):
        out.append(f'<text x="{px(t):.1f}" y="{HEIGHT - MARGIN["bottom"] + 16}" text-anchor="middle">{_num(t)}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{py(t) + 4:.1f}" text-anchor="end">{_num(t)}</text>')
        out.append(
            f'<line x1="{MARGIN["left"]}" x2="{MARGIN["left"] + pw}" y1="{py(t):.1f}" y2="{py(t):.1f}" '
            f'stroke="#ddd"/>'
        )
    out.append(
        f'<text x="{MARGIN["left"] + pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle">{escape(xlabel)}</text>'
    )
    out.append(
        f'<text x="16" y="{MARGIN["top"] + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {MARGIN["top"] + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    names = list(series) + [n for n in scatter if n not in series]
    for i, name in enumerate(names):
        color = PALETTE[i % len(PALETTE)]
        pts = series.get(name, [])
        if bands and name in bands and pts:
            upper = [(px(x), py(y + h)) for (x, y), h in zip(pts, bands[name])]
            lower = [(px(x), py(y - h)) for (x, y), h in zip(pts, bands[name])]
            poly = " ".join(f"{a:.1f},{b:.1f}" for a, b in upper + lower[::-1])
            out.append(f'<polygon class="band" points="{poly}" fill="{color}" fill-opacity="0.15" stroke="none"/>')
        if pts:
            line = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in pts)
            out.append(f'<polyline class="series" data-name="{escape(name)}" points="{line}" fill="none" '
                       f'stroke="{color}" stroke-width="1.5"/>')
            if markers:
                for x, y in pts:
                    out.append(f'<circle class="point" cx="{px(x):.1f}" cy="{py(y):.1f}" r="2.5" fill="{color}"/>')
        for x, y in scatter.get(name, []):
            out.append(f'<circle class="scatter" cx="{px(x):.1f}" cy="{py(y):.1f}" r="4" fill="{color}" '
                       f'fill-opacity="0.6"/>')
        ly = MARGIN["top"] + 14 + 18 * i
        lx = WIDTH - MARGIN["right"] + 12
        out.append(f'<rect x="{lx}" y="{ly - 9}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{lx + 16}" y="{ly}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def grid_svg(grid: Grid, program: Program | None = None, lexicon: Lexicon | None = None, cell: int = 24) -> str:
    """A scene; with a program, every primitive block is outlined and each action gets its own colour."""
    size = SIZE * cell
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white" stroke="#999"/>',
    ]

    def y_of(row: int) -> int:
        return (SIZE - 1 - row) * cell

    if program is None:
        for c, r in sorted(grid.cells()):
            out.append(f'<rect x="{c * cell}" y="{y_of(r)}" width="{cell}" height="{cell}" fill="#333"/>')
    else:
        for i, step in enumerate(program.steps):
            color = PALETTE[i % len(PALETTE)]
            for block in flatten(Program((step,)), lexicon):
                cells = block.cells()
                xs = [c.col for c in cells]
                ys = [c.row for c in cells]
                x, y = min(xs) * cell, y_of(max(ys))
                w = (max(xs) - min(xs) + 1) * cell
                h = (max(ys) - min(ys) + 1) * cell
                out.append(
                    f'<rect x="{x + 1}" y="{y + 1}" width="{w - 2}" height="{h - 2}" fill="{color}" '
                    f'stroke="black" data-step="{i}"/>'
                )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def program_ascii(program: Program, lexicon: Lexicon) -> str:
    """Grid with each cell labelled by the program step that placed it (0-9, then a-z)."""
    labels = "0123456789abcdefghijklmnopqrstuvwxyz"
    canvas = [["." for _ in range(SIZE)] for _ in range(SIZE)]
    for i, step in enumerate(program.steps):
        for block in flatten(Program((step,)), lexicon):
            for c in block.cells():
                canvas[c.row][c.col] = labels[i % len(labels)]
    rows = ["".join(canvas[r]) for r in reversed(range(SIZE))]
    legend = [f"{labels[i % len(labels)]}: a{s.action} {lexicon[s.action].key} @ ({s.anchor.col},{s.anchor.row})"
              for i, s in enumerate(program.steps)]
    return "\n".join(rows + [""] + legend) + "\n"


def _read_csv(path: Path) -> list[dict[str, str]]:
    with path.open() as fh:
        return list(csv.DictReader(fh))


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _emit(out: Path, name: str, header, rows, svg: str, written: list[Path]) -> None:
    _write_csv(out / f"{name}.csv", header, rows)
    (out / f"{name}.svg").write_text(svg)
    written += [out / f"{name}.csv", out / f"{name}.svg"]


def _run_charts(run_dir: Path, out: Path, written: list[Path]) -> None:
    rows = _read_csv(run_dir / "metrics.csv")
    last_of_step = {r["step"]: r for r in rows}
    data = [(int(r["step"]), float(r["avg_complexity"])) for r in last_of_step.values()]
    _emit(out, "chart_complexity", ("step", "avg_complexity"), data,
          line_chart({"avg_complexity": data}, "Average program length", "step", "greedy program length"), written)
    data = [(i, float(r["test_reward"])) for i, r in enumerate(rows, start=1)]
    _emit(out, "chart_reward", ("epoch_index", "test_reward"), data,
          line_chart({"test_reward": data}, "Test reward", "epoch", "exact-match rate", markers=False), written)
    data = [(i, float(r["cumulative_regret"])) for i, r in enumerate(rows, start=1)]
    _emit(out, "chart_regret", ("epoch_index", "cumulative_regret"), data,
          line_chart({"cumulative_regret": data}, "Cumulative regret", "epoch", "regret", markers=False), written)


def _comparison_charts(run_dir: Path, out: Path, written: list[Path]) -> None:
    rows = _read_csv(run_dir / "comparison.csv")
    for metric, title in (("avg_complexity", "Average program length"), ("test_reward", "Test reward")):
        series: dict[str, list[tuple[float, float]]] = {}
        bands: dict[str, list[float]] = {}
        table = []
        for r in rows:
            series.setdefault(r["variant"], []).append((int(r["step"]), float(r[metric])))
            bands.setdefault(r["variant"], []).append(float(r[f"{metric}_ci"]))
            table.append((r["variant"], int(r["step"]), float(r[metric]), float(r[f"{metric}_ci"])))
        _emit(out, f"chart_compare_{metric}", ("variant", "step", metric, "ci95"), table,
              line_chart(series, f"{title} (mean and 95% CI)", "step", metric, bands=bands), written)


def _sweep_charts(run_dir: Path, out: Path, written: list[Path]) -> None:
    series, scatter, table = {}, {}, []
    if (run_dir / "sweep.csv").exists():
        arms = _read_csv(run_dir / "sweep.csv")
        for r in arms:
            label = "adopted" if r["adopted"] == "1" else "rejected"
            point = (int(r["final_lexicon_size"]), float(r["final_complexity"]))
            scatter.setdefault(label, []).append(point)
            table.append((label, *point))
        rates: dict[int, list[int]] = {}
        for r in arms:
            rates.setdefault(int(r["base_lexicon_size"]), []).append(int(r["adopted"]))
        rate_rows = [(size, len(v), sum(v), sum(v) / len(v)) for size, v in sorted(rates.items())]
        rate_pts = [(size, rate) for size, _, _, rate in rate_rows]
        _emit(out, "chart_adoption_rate", ("lexicon_size", "arms", "adopted", "adoption_rate"), rate_rows,
              line_chart({"adoption_rate": rate_pts}, "Adoption rate by language size", "lexicon size",
                         "adopted / sampled arms"), written)
    if (run_dir / "frontier.csv").exists():
        pts = [(int(r["lexicon_size"]), float(r["best_avg_mdl"])) for r in _read_csv(run_dir / "frontier.csv")]
        series["frontier"] = pts
        table += [("frontier", *p) for p in pts]
    _emit(out, "chart_adoption", ("kind", "lexicon_size", "avg_length"), table,
          line_chart(series, "Sweep arms against the efficiency frontier", "lexicon size", "average program length",
                     scatter=scatter), written)


def _qinit_charts(run_dir: Path, out: Path, written: list[Path]) -> None:
    rows = _read_csv(run_dir / "qinit.csv")
    per: dict[str, dict[int, list[float]]] = {}
    for r in rows:
        per.setdefault(r["q_init"], {}).setdefault(int(r["epoch"]), []).append(float(r["cumulative_regret"]))
    series, table = {}, []
    for q, by_epoch in sorted(per.items()):
        pts = [(e, sum(v) / len(v)) for e, v in sorted(by_epoch.items())]
        series[f"q_init={q}"] = pts
        table += [(q, e, m) for e, m in pts]
    _emit(out, "chart_qinit", ("q_init", "epoch", "mean_cumulative_regret"), table,
          line_chart(series, "Regret after injecting an abstraction", "epoch", "mean cumulative regret"), written)


def _scene_renders(run_dir: Path, out: Path, written: list[Path], n_scenes: int = 3) -> None:
    from .experiments import dataset_for

    manifest = json.loads((run_dir / "manifest.json").read_text())
    dataset = dataset_for(RunConfig(**manifest["config"]))
    lexicon = Lexicon.from_json(json.loads((run_dir / "lexicon.json").read_text()))
    programs = json.loads((run_dir / "programs.json").read_text())
    renders = out / "renders"
    renders.mkdir(exist_ok=True)
    for key in sorted(programs, key=int)[:n_scenes]:
        program = Program.from_json(programs[key])
        scene = dataset.scene(int(key))
        stem = renders / f"scene_{int(key):04d}"
        (stem.with_suffix(".txt")).write_text(scene.goal.render() + "\n\n" + program_ascii(program, lexicon))
        (stem.with_suffix(".svg")).write_text(grid_svg(scene.goal, program, lexicon))
        written += [stem.with_suffix(".txt"), stem.with_suffix(".svg")]


def render_report(run_dir: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """Render every chart the run directory has data for; returns the written paths."""
    run_dir = Path(run_dir)
    out = Path(out_dir) if out_dir is not None else run_dir / "report"
    sources = {
        "metrics.csv": _run_charts,
        "comparison.csv": _comparison_charts,
        "sweep.csv": _sweep_charts,
        "qinit.csv": _qinit_charts,
    }
    present = [name for name in sources if (run_dir / name).exists()]
    if (run_dir / "frontier.csv").exists() and "sweep.csv" not in present:
        present.append("sweep.csv")
    if not present:
        raise MissingMetrics(f"no metrics files in {run_dir}")
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for name in present:
        sources[name](run_dir, out, written)
    if all((run_dir / f).exists() for f in ("programs.json", "lexicon.json", "manifest.json")):
        _scene_renders(run_dir, out, written)
    return written
