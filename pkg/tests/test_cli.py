import csv
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from graspdecode import report
from graspdecode.cli import main
from graspdecode.data import load_epochs


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def small_set(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    path = d / "s.epochs"
    assert main(["synth", "--channels", "6", "--rate", "125", "--trials", "10", "--seed", "3",
                 "-o", str(path)]) == 0
    return path


def test_synth_deterministic(tmp_path, small_set):
    again = tmp_path / "again.epochs"
    assert main(["synth", "--channels", "6", "--rate", "125", "--trials", "10", "--seed", "3",
                 "-o", str(again)]) == 0
    assert again.read_bytes() == small_set.read_bytes()
    assert load_epochs(again).n_trials == 40
    assert (tmp_path / "again.spec.json").is_file()


def test_synth_from_spec(tmp_path, small_set):
    out = tmp_path / "from_spec.epochs"
    spec = small_set.with_suffix(".spec.json")
    assert main(["synth", "--spec", str(spec), "-o", str(out)]) == 0
    assert out.read_bytes() == small_set.read_bytes()


def test_preprocess_command(tmp_path, small_set):
    out = tmp_path / "p.epochs"
    assert main(["preprocess", "-i", str(small_set), "-o", str(out), "--augment", "12", "--normalize"]) == 0
    e = load_epochs(out)
    assert e.n_trials == 48


def test_evaluate_full_grid_and_determinism(tmp_path, small_set):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["evaluate", "-i", str(small_set), "--out", str(a), "--jobs", "1"]) == 0
    assert main(["evaluate", "-i", str(small_set), "--out", str(b), "--jobs", "3"]) == 0
    rows = _rows(a / "results.csv")
    assert len(rows) == 36
    assert {r["combo"] for r in rows} == {"0"}
    assert {"chance", "class_dis"} <= set(rows[0])
    for name in ("results.csv", "folds.csv", "summary.json", "accuracy.svg"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert len(_rows(a / "folds.csv")) == 36 * 5
    summary = json.loads((a / "summary.json").read_text())
    assert len(summary["results"]) == 36


def test_missing_input_exit_2(tmp_path):
    out = tmp_path / "never"
    assert main(["evaluate", "-i", str(tmp_path / "nope.epochs"), "--out", str(out)]) == 2
    assert not out.exists()


def test_config_file_and_override(tmp_path, small_set):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"input": str(small_set), "models": ["LDA", "MDM"], "pairs": ["TG/PG"],
                               "seed": 1}))
    out = tmp_path / "o"
    assert main(["evaluate", "--config", str(cfg), "--models", "LDA", "--out", str(out)]) == 0
    rows = _rows(out / "results.csv")
    assert [(r["pair"], r["model"]) for r in rows] == [("TG/PG", "LDA")]


@pytest.mark.parametrize("doc", [{"bogus": 1}, {"models": ["kNN"]}, {"pairs": ["TG/Fist"]}])
def test_bad_config_exit_2(tmp_path, small_set, doc):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"input": str(small_set), **doc}))
    assert main(["evaluate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_env_default_out(tmp_path, small_set, monkeypatch):
    monkeypatch.setenv("GRASPDECODE_OUT", str(tmp_path / "envout"))
    assert main(["evaluate", "-i", str(small_set), "--models", "LDA", "--pairs", "TG/Rest"]) == 0
    assert (tmp_path / "envout" / "results.csv").is_file()


def test_unresolvable_combination(tmp_path, small_set):
    assert main(["ablate", "-i", str(small_set), "--combos", "0", "3", "--out", str(tmp_path / "x")]) == 2
    assert not (tmp_path / "x").exists()


def test_augment_before_split_toggle(tmp_path, small_set):
    out = tmp_path / "po"
    assert main(["evaluate", "-i", str(small_set), "--models", "LDA", "--pairs", "TG/Rest",
                 "--augment-before-split", "--augment", "20", "--wavelet-band", "approx+detail", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["augment_before_split"] is True
    assert int(_rows(out / "results.csv")[0]["n_test"]) == 40


def test_ablate_rows_and_svg(tmp_path):
    epochs = tmp_path / "c.epochs"
    assert main(["synth", "--central", "--rate", "125", "--trials", "10", "-o", str(epochs)]) == 0
    out = tmp_path / "abl"
    assert main(["ablate", "-i", str(epochs), "--combos", "0", "1", "9", "--models", "LDA",
                 "--out", str(out), "--jobs", "2"]) == 0
    rows = _rows(out / "ablation.csv")
    assert len(rows) == 3 * 6
    assert all(float(r["drop"]) == 0.0 for r in rows if r["combo"] == "0")
    root = ET.parse(out / "ablation.svg").getroot()
    groups = [g.get("id") for g in root.iter("{http://www.w3.org/2000/svg}g")
              if (g.get("id") or "").startswith("combo-")]
    assert sorted(groups) == ["combo-0", "combo-1", "combo-9"]


def _results_file(path, accuracy):
    rows = [{"combo": 0, "pair": "TG/PG", "pipeline": "CSP-WD", "model": "LDA", "accuracy": accuracy,
             "f1": accuracy, "precision": accuracy, "n_test": 60, "chance": 0.6, "class_dis": 1.0}]
    path.write_text(report.csv_text(rows, report.RESULT_FIELDS))
    return str(path)


def test_stats_self_comparison(tmp_path, small_set):
    out = tmp_path / "r"
    assert main(["evaluate", "-i", str(small_set), "--out", str(out)]) == 0
    folds = str(out / "folds.csv")
    stats = tmp_path / "stats.csv"
    assert main(["stats", "--group", f"a={folds}", "--group", f"b={folds}", "--reps", "20",
                 "-o", str(stats)]) == 0
    rows = _rows(stats)
    assert len(rows) == 36
    assert all(float(r["wilcoxon_p"]) == 1.0 for r in rows)


def test_stats_planted_gap(tmp_path):
    rng = np.random.default_rng(0)
    a = [_results_file(tmp_path / f"a{i}.csv", 0.6 + 0.01 * rng.standard_normal()) for i in range(20)]
    b = [_results_file(tmp_path / f"b{i}.csv", 0.9 + 0.01 * rng.standard_normal()) for i in range(5)]
    stats = tmp_path / "s.csv"
    assert main(["stats", "--group", "able=" + ",".join(a), "--group", "amp=" + ",".join(b),
                 "-o", str(stats)]) == 0
    row = _rows(stats)[0]
    assert int(row["bootstrap_reps"]) == 1000
    assert float(row["fraction_significant"]) >= 0.9
    assert row["wilcoxon_p"] == "nan"


def test_stats_usage_errors(tmp_path):
    f = _results_file(tmp_path / "x.csv", 0.7)
    assert main(["stats", "--group", f"a={f}", "--group", f"b={f}", "--reps", "0"]) == 2
    assert main(["stats", "--group", f"a={f}"]) == 2
    assert main(["stats", "--group", f"a={f}", "--group", f"b={tmp_path / 'none.csv'}"]) == 2


def test_actuate_check(tmp_path, capsys):
    assert main(["actuate-check"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[-1].endswith("00 00 00 00 00 00")
    bad = tmp_path / "t.json"
    bad.write_text(json.dumps({"TG": {"channel": "close", "millivolts": 500, "duration_ms": 100},
                               "PG": {"channel": "close", "millivolts": 900, "duration_ms": 100},
                               "Open": {"channel": "open", "millivolts": 900, "duration_ms": 100},
                               "Rest": {"channel": "none", "millivolts": 0, "duration_ms": 0}}))
    assert main(["actuate-check", "--table", str(bad)]) == 1
    assert main(["actuate-check", "--table", str(tmp_path / "missing.json")]) == 2


def test_usage_error_from_parser():
    assert main(["evaluate", "--jobs", "many"]) == 2
    assert main([]) == 2
