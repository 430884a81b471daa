"""End-to-end tests for the command-line front end.

Each test builds a tiny TOML config in tmp_path and drives main()
directly; all artifacts land under tmp_path so runs are hermetic.
"""

import json
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from yieldbench.cli.main import main
from yieldbench.cli.report import dumps_stable, render_rows, write_report

BASE_CONFIG = """\
seed = 7
out = "{out}"
test_years = [2016, 2017]

[data.synth]
n_regions = 8
year_start = 2010
year_end = 2017
weeks = 12

[[models]]
name = "ridge"
family = "ridge"
lam = 2.0

[models.search]
lam = [0.1, 1.0, 10.0]

[[models]]
name = "gbt"
family = "gbt"
n_trees = 15

[explain]
model = "gbt"
instances = 2
budget = 160
background = 30

[tune]
k = 3
"""


@pytest.fixture
def workdir(tmp_path):
    out = tmp_path / "out"
    cfg = tmp_path / "run.toml"
    cfg.write_text(BASE_CONFIG.format(out=out.as_posix()), encoding="utf-8")
    return cfg, out


def run(cfg, command, *extra):
    return main([command, "--config", str(cfg), *extra])


def _assert_svg(path):
    root = ET.fromstring(path.read_text(encoding="utf-8"))
    assert root.tag.endswith("svg")


# ------------------------------------------------------------ exit codes

def test_unknown_command_is_usage_error(workdir, capsys):
    cfg, _ = workdir
    assert run(cfg, "frobnicate") == 1
    assert "usage:" in capsys.readouterr().err


def test_missing_config_is_usage_error(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "nope.toml")]) == 1
    assert "not found" in capsys.readouterr().err


def test_invalid_toml_is_usage_error(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("models = [[[", encoding="utf-8")
    assert main(["synth", "--config", str(bad)]) == 1
    assert "invalid TOML" in capsys.readouterr().err


def test_config_without_models_rejected(tmp_path, capsys):
    cfg = tmp_path / "r.toml"
    cfg.write_text('test_years = [2017]\n[data.synth]\nn_regions = 4\n',
                   encoding="utf-8")
    assert main(["train", "--config", str(cfg), "--seed", "0"]) == 1
    assert "at least one" in capsys.readouterr().err


def test_seed_required_for_train(workdir, capsys):
    cfg, _ = workdir
    text = cfg.read_text(encoding="utf-8").replace("seed = 7\n", "")
    cfg.write_text(text, encoding="utf-8")
    assert run(cfg, "train") == 1
    assert "requires --seed" in capsys.readouterr().err
    # explicit flag fills the gap
    assert run(cfg, "train", "--seed", "3") == 0


def test_missing_data_file_is_data_error(tmp_path, capsys):
    cfg = tmp_path / "r.toml"
    cfg.write_text(
        'test_years = [2017]\nseed = 1\nout = "%s"\n'
        '[data]\ncsv = "%s"\n[[models]]\nfamily = "ridge"\n'
        % ((tmp_path / "o").as_posix(), (tmp_path / "missing.csv").as_posix()),
        encoding="utf-8")
    assert main(["evaluate", "--config", str(cfg)]) == 2
    assert "data error" in capsys.readouterr().err


def test_absent_test_year_is_data_error(workdir, capsys):
    cfg, _ = workdir
    text = cfg.read_text(encoding="utf-8").replace("test_years = [2016, 2017]",
                                                   "test_years = [2031]")
    cfg.write_text(text, encoding="utf-8")
    assert run(cfg, "evaluate") == 2
    assert "2031" in capsys.readouterr().err


# ---------------------------------------------------------- happy path

def test_synth_writes_csv(workdir, capsys):
    cfg, out = workdir
    assert run(cfg, "synth") == 0
    path = out / "synthetic.csv"
    assert path.is_file()
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header.startswith("region_id,year,yield_t_ha")
    # 8 regions x 8 years of data rows
    assert sum(1 for _ in path.open()) == 65


def test_train_persists_models(workdir):
    cfg, out = workdir
    assert run(cfg, "train") == 0
    for name in ("ridge", "gbt"):
        payload = json.loads((out / f"model_{name}.json").read_text())
        assert payload["family"] == name


def test_tune_writes_trials_and_best(workdir):
    cfg, out = workdir
    assert run(cfg, "tune") == 0
    trials = [json.loads(line) for line in
              (out / "trials_ridge.jsonl").read_text().splitlines() if line]
    assert len(trials) == 3  # grid over three lam values
    tuned = json.loads((out / "tuned.json").read_text())
    best = tuned["best"]["ridge"]
    assert best["config"]["lam"] in (0.1, 1.0, 10.0)
    assert best["mean_rmse"] == min(t["mean_rmse"] for t in trials)
    # gbt has no search table, so only ridge appears
    assert sorted(tuned["best"]) == ["ridge"]
    assert not (out / "trials_gbt.jsonl").exists()


def test_evaluate_report_structure(workdir):
    cfg, out = workdir
    assert run(cfg, "evaluate") == 0
    report = json.loads((out / "report.json").read_text())
    assert report["schema"] == 1
    assert report["test_years"] == [2016, 2017]
    rows = report["rows"]
    # rows per (year, model, metric): 2 * 2 * 4
    assert len(rows) == 16
    combos = {(r["split"], r["model"], r["metric"]) for r in rows}
    assert ("2016", "ridge", "rmse") in combos
    assert ("2017", "gbt", "mae") in combos
    for r in rows:
        assert np.isfinite(r["train"]) and np.isfinite(r["test"])
    assert (out / "report.txt").is_file()
    csv_lines = (out / "per_region_error.csv").read_text().splitlines()
    assert csv_lines[0] == "model,test_year,region_id,pct_error"
    assert len(csv_lines) > 1


def test_evaluate_byte_identical_reruns(workdir):
    cfg, out = workdir
    assert run(cfg, "evaluate") == 0
    first = (out / "report.json").read_bytes()
    assert run(cfg, "evaluate") == 0
    assert (out / "report.json").read_bytes() == first


def test_explain_artifacts(workdir):
    cfg, out = workdir
    assert run(cfg, "explain") == 0
    lines = (out / "attributions.jsonl").read_text().splitlines()
    assert len(lines) == 2
    for line in lines:
        rec = json.loads(line)
        # efficiency survives serialization
        assert rec["base_value"] + sum(rec["phi"]) == pytest.approx(
            rec["base_value"] + np.sum(rec["phi"]))
        assert len(rec["phi"]) == len(rec["feature_names"]) == len(rec["values"])
    ranking = json.loads((out / "ranking.json").read_text())
    scores = [e["mean_abs_phi"] for e in ranking["entries"]]
    assert scores == sorted(scores, reverse=True)
    _assert_svg(out / "importance_bar.svg")
    _assert_svg(out / "force_0.svg")
    _assert_svg(out / "force_1.svg")


def test_select_reuses_ranking(workdir):
    cfg, out = workdir
    assert run(cfg, "explain") == 0
    assert run(cfg, "select") == 0
    selection = json.loads((out / "selection.json").read_text())
    subsets = {r["subset"] for r in selection["rows"]}
    assert subsets == {"top_100", "top_75", "top_50", "weather"}
    by_subset = {r["subset"]: r["n_features"] for r in selection["rows"]}
    d = len(json.loads((out / "ranking.json").read_text())["entries"])
    assert by_subset["top_100"] == d
    assert by_subset["top_50"] == -(-d // 2)  # ceil
    assert by_subset["weather"] == 6 * 12
    assert (out / "selection.txt").read_text().startswith("split")


def test_plot_rerenders_from_json(workdir):
    cfg, out = workdir
    assert run(cfg, "evaluate") == 0
    assert run(cfg, "explain") == 0
    svgs = sorted(p.name for p in out.glob("*.svg"))
    before = {p: (out / p).read_bytes() for p in svgs}
    for p in svgs:
        (out / p).unlink()
    assert run(cfg, "plot") == 0
    for name in ("hexbin_ridge.svg", "hexbin_gbt.svg", "residual_ridge.svg",
                 "importance_bar.svg", "force_0.svg"):
        _assert_svg(out / name)
    # re-rendered force/importance plots are byte-identical to the originals
    assert (out / "importance_bar.svg").read_bytes() == before["importance_bar.svg"]
    assert (out / "force_0.svg").read_bytes() == before["force_0.svg"]


def test_plot_with_empty_out_is_usage_error(workdir, capsys):
    cfg, _ = workdir
    assert run(cfg, "plot") == 1
    assert "nothing to plot" in capsys.readouterr().err


def test_out_flag_overrides_config(workdir, tmp_path):
    cfg, _ = workdir
    other = tmp_path / "elsewhere"
    assert run(cfg, "synth", "--out", str(other)) == 0
    assert (other / "synthetic.csv").is_file()


def test_train_on_csv_round_trip(workdir):
    cfg, out = workdir
    assert run(cfg, "synth") == 0
    csv_cfg = cfg.parent / "csv.toml"
    csv_cfg.write_text(
        'seed = 7\nout = "%s"\ntest_years = [2016, 2017]\n'
        '[data]\ncsv = "%s"\n[data.synth]\nweeks = 12\n'
        '[[models]]\nname = "ridge"\nfamily = "ridge"\nlam = 2.0\n'
        % (out.as_posix(), (out / "synthetic.csv").as_posix()),
        encoding="utf-8")
    assert main(["evaluate", "--config", str(csv_cfg)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert {r["model"] for r in report["rows"]} == {"ridge"}


# ------------------------------------------------------------------- svg

def test_svg_force_all_zero_phi_base_only():
    from yieldbench.cli.svg import PlotSpec, emit_svg

    doc = emit_svg(PlotSpec("force", {
        "base": 4.0, "output": 4.0, "instance_ref": "r",
        "contributions": [{"feature": "a", "value": 1.0, "phi": 0.0,
                           "positive": False}]}))
    root = ET.fromstring(doc)
    assert "base 4.000" in doc
    assert "output" not in doc  # zero contributions collapse to the base marker
    assert root.tag.endswith("svg")


def test_svg_deterministic_bytes():
    from yieldbench.cli.svg import PlotSpec, emit_svg

    spec = PlotSpec("importance_bar",
                    {"entries": [{"feature": "a", "mean_abs_phi": 1.0, "sign": 1},
                                 {"feature": "b", "mean_abs_phi": 0.5, "sign": -1}]})
    assert emit_svg(spec) == emit_svg(spec)


def test_svg_fifteen_bars_with_sign_colors():
    from yieldbench.cli.svg import BLUE, RED, PlotSpec, emit_svg

    entries = [{"feature": f"f{i}", "mean_abs_phi": 15.0 - i,
                "sign": 1 if i % 2 == 0 else -1} for i in range(15)]
    doc = emit_svg(PlotSpec("importance_bar", {"entries": entries}))
    root = ET.fromstring(doc)
    bars = [el for el in root.iter() if el.tag.endswith("rect")
            and el.get("fill") in (RED, BLUE)]
    assert len(bars) == 15
    widths = [float(b.get("width")) for b in bars]
    assert widths == sorted(widths, reverse=True)
    assert bars[0].get("fill") == RED and bars[1].get("fill") == BLUE


def test_svg_empty_payload_errors():
    from yieldbench.cli.svg import PlotSpec, emit_svg

    with pytest.raises(ValueError, match="at least one entry"):
        emit_svg(PlotSpec("importance_bar", {"entries": []}))
    with pytest.raises(ValueError, match="at least one bin"):
        emit_svg(PlotSpec("hexbin", {"bins": []}))
    with pytest.raises(ValueError, match="unknown plot kind"):
        PlotSpec("scatter3d", {})


# -------------------------------------------------------------- report io

def test_write_report_round_trip(tmp_path):
    report = {"command": "evaluate", "rows": [{"split": "2017", "x": 1.25}]}
    path = write_report(report, tmp_path)
    back = json.loads(path.read_text(encoding="utf-8"))
    assert back["schema"] == 1
    assert back["rows"] == report["rows"]
    assert dumps_stable(back) == path.read_text(encoding="utf-8")


def test_write_report_rejects_empty(tmp_path):
    with pytest.raises(ValueError, match="empty results"):
        write_report({"rows": []}, tmp_path)


def test_render_rows_fixed_width():
    text = render_rows([{"a": 1.0, "b": "xy"}, {"a": 22.5, "c": 3}])
    lines = text.splitlines()
    assert lines[0].split() == ["a", "b", "c"]
    assert set(lines[1]) <= {"-", " "}
    assert len({len(line) for line in lines[:2]}) == 1
