import csv
import xml.etree.ElementTree as ET

import pytest

from pace.config import RunConfig
from pace.experiments import (
    compute_frontier,
    execute_run,
    frontier_pool,
    run_adoption_study,
    run_qinit_study,
    write_frontier,
)
from pace.report import MissingMetrics, render_report

SVG = "{http://www.w3.org/2000/svg}"


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    execute_run(RunConfig(steps=3, epochs=2, hidden=16, n_shapes=5), out, checkpoints=False)
    return out


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_empty_dir(tmp_path):
    with pytest.raises(MissingMetrics):
        render_report(tmp_path)


def test_charts_are_xml_and_match_csv(run_dir):
    written = render_report(run_dir)
    svgs = [p for p in written if p.suffix == ".svg"]
    assert svgs
    for path in svgs:
        ET.parse(path)
    report = run_dir / "report"
    root = ET.parse(report / "chart_complexity.svg").getroot()
    points = root.findall(f"{SVG}circle[@class='point']")
    assert len(points) == len(rows(report / "chart_complexity.csv")) == 3
    for name in ("chart_reward", "chart_regret"):
        root = ET.parse(report / f"{name}.svg").getroot()
        line = root.find(f"{SVG}polyline[@class='series']")
        assert len(line.get("points").split()) == len(rows(report / f"{name}.csv")) == 6
    assert (report / "renders" / "scene_0000.txt").exists()


def test_rerender_is_byte_identical(run_dir, tmp_path):
    first = {p.name: p.read_bytes() for p in render_report(run_dir, tmp_path / "a")}
    second = {p.name: p.read_bytes() for p in render_report(run_dir, tmp_path / "b")}
    assert first == second


def test_sweep_frontier_and_qinit_reports(tmp_path, tiny_dataset):
    cfg = RunConfig(steps=3, epochs=1, hidden=16, n_shapes=5)
    out = tmp_path / "sweep"
    arms = run_adoption_study(cfg, sizes=(2, 3), budget_epochs=1, max_arms=4, out_dir=out, dataset=tiny_dataset)
    assert len(arms) <= 4
    pool = frontier_pool(tiny_dataset, 10)
    write_frontier(out / "frontier.csv", compute_frontier(pool, [s.canonical_program for s in tiny_dataset.train], 5))
    written = render_report(out)
    names = {p.name for p in written}
    assert {"chart_adoption.svg", "chart_adoption_rate.svg"} <= names
    root = ET.parse(out / "report" / "chart_adoption.svg").getroot()
    scatter = root.findall(f"{SVG}circle[@class='scatter']")
    assert len(scatter) == len(arms)

    q_out = tmp_path / "qinit"
    report = run_qinit_study(cfg, seeds=[0, 1], epochs=2, out_dir=q_out, dataset=tiny_dataset)
    assert len(report.arms) == 4
    render_report(q_out)
    root = ET.parse(q_out / "report" / "chart_qinit.svg").getroot()
    assert len(root.findall(f"{SVG}polyline[@class='series']")) == 2
