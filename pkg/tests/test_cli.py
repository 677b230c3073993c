import csv
import json
from pathlib import Path

import numpy as np
import pytest

from recourse_risk.cli import main
from recourse_risk.experiment import ConfigError, aggregate, parse_config, run, sweep, verify

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BASE = {
    "dataset": {"kind": "gaussians"},
    "classifiers": ["bayes", "logistic-regression"],
    "methods": [{"name": "proj", "searcher": {"kind": "hyperplane-projection"}}],
    "replicates": 2,
    "n_train": 500,
    "n_test": 2000,
}


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc), encoding="utf-8")
    return p


@pytest.mark.parametrize(
    "patch",
    [
        {"colour": 1},
        {"dataset": {"kind": "gaussians", "mean": [0, 0]}},
        {"dataset": {"kind": "spirals"}},
        {"classifiers": ["svm"]},
        {"classifiers": []},
        {"methods": [{"searcher": {"kind": "teleport"}}]},
        {"methods": [{"searcher": {"kind": "grid-brute-force"}, "acceptance": {"kind": "constant"}}]},
        {"responses": ["stubborn"]},
        {"replicates": 0},
        {"loss": "hinge"},
        {"sweep": {"parameter": "D", "grid": [1]}},
        {"verify": {"suites": ["everything"]}},
    ],
)
def test_invalid_configs_rejected(patch):
    with pytest.raises(ConfigError):
        parse_config({**BASE, **patch})


def test_bayes_needs_synthetic_data():
    with pytest.raises(ConfigError):
        parse_config({**BASE, "dataset": {"kind": "csv", "path": "x.csv", "label_column": "y", "positive_value": 1}})


def test_gaussian_example_values():
    cfg = parse_config({**BASE, "classifiers": ["bayes"], "replicates": 3, "n_test": 50_000})
    table = {r["response"]: r for r in run(cfg)["table"]}
    assert table["compliant"]["r_p_mean"] == pytest.approx(0.1241, abs=0.01)
    assert table["compliant"]["r_q_mean"] == pytest.approx(0.3121, abs=0.01)
    assert table["defiant"]["r_q_mean"] == pytest.approx(0.5, abs=0.01)


def test_aggregate_recomputable_and_bolding():
    cfg = parse_config({**BASE, "replicates": 3})
    archive = run(cfg)
    for row in archive["table"]:
        reps = [r for r in archive["rows"] if (r["classifier"], r["method"], r["response"]) == (row["classifier"], row["method"], row["response"])]
        assert len(reps) == 3
        assert row["r_p_mean"] == pytest.approx(np.mean([r["r_p"] for r in reps]), abs=1e-12)
        assert row["r_q_std"] == pytest.approx(np.std([r["r_q"] for r in reps], ddof=1), abs=1e-12)
    rows = [
        {"dataset": "d", "classifier": "c", "method": "m", "response": "compliant", "replicate": i, "r_p": p, "r_q": q, "stderr_p": 0.0, "stderr_q": 0.0}
        for i, (p, q) in enumerate([(0.10, 0.30), (0.12, 0.32)])
    ]
    t = aggregate(rows)[0]
    assert t["bold_r_p"] and not t["bold_r_q"]
    rows[1]["r_q"] = 0.12
    rows[0]["r_q"] = 0.11
    t = aggregate(rows)[0]
    assert t["bold_r_p"] and t["bold_r_q"]


def test_parallel_replicates_match_serial():
    cfg = parse_config(BASE)
    assert run(cfg, jobs=1)["rows"] == run(cfg, jobs=2)["rows"]


def test_cli_run_is_byte_identical(tmp_path, capsys):
    cfg = _write(tmp_path, {**BASE, "replicates": 1})
    for out in ("a", "b"):
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / out)]) == 0
    for name in ("archive.json", "results.csv", "replicates.csv", "risks.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    with open(tmp_path / "a" / "results.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["classifier"] for r in rows} == {"Bayes", "LR"}
    assert "proj:r_q_mean" in rows[0] and "proj:r_q_stderr" in rows[0]
    assert "R_P" in capsys.readouterr().out


def test_cli_seed_overrides_config(tmp_path):
    cfg = _write(tmp_path, {**BASE, "replicates": 1, "classifiers": ["logistic-regression"]})
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "5"])
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "b")])
    a = json.loads((tmp_path / "a" / "archive.json").read_text())
    b = json.loads((tmp_path / "b" / "archive.json").read_text())
    assert a["config"]["seed"] == 5 and b["config"]["seed"] == 0
    assert a["rows"][0]["r_p"] != b["rows"][0]["r_p"]


def test_cli_errors_exit_nonzero(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    assert main(["run", "--config", str(bad)]) == 2
    unknown = _write(tmp_path, {**BASE, "extra": True}, "u.json")
    assert main(["run", "--config", str(unknown)]) == 2
    never = _write(tmp_path, {**BASE, "dataset": {"kind": "csv", "path": "nope.csv", "label_column": "y", "positive_value": 1}, "classifiers": ["logistic-regression"]}, "n.json")
    assert main(["run", "--config", str(never)]) == 2
    assert "error:" in capsys.readouterr().err


def test_infeasible_recourse_aborts(tmp_path, capsys):
    doc = {
        **BASE,
        "classifiers": ["logistic-regression"],
        "methods": [{"name": "tiny", "searcher": {"kind": "grid-brute-force", "params": {"resolution": 5, "bounds": [[-9, -8], [-9, -8]]}}}],
        "replicates": 1,
    }
    assert main(["run", "--config", str(_write(tmp_path, doc)), "--out", str(tmp_path / "o")]) == 2
    assert "error:" in capsys.readouterr().err


def test_sweep_p_endpoints_and_fit(tmp_path):
    doc = {**BASE, "classifiers": ["bayes"], "responses": ["compliant"], "n_test": 50_000, "sweep": {"parameter": "p", "grid": [0, 0.5, 1]}}
    assert main(["sweep", "--config", str(_write(tmp_path, doc)), "--out", str(tmp_path / "o")]) == 0
    series = json.loads((tmp_path / "o" / "archive.json").read_text())["series"]
    ends = {pt["value"]: pt["diff_mean"] for pt in series}
    assert ends[0.0] == 0.0
    assert ends[1.0] == pytest.approx(0.188, abs=0.01)
    assert (tmp_path / "o" / "sweep_fit.csv").exists() and (tmp_path / "o" / "sweep.svg").exists()


def test_sweep_sigma2_vanishes_at_zero():
    cfg = parse_config({**BASE, "classifiers": ["bayes"], "responses": ["compliant"], "sweep": {"parameter": "sigma2", "grid": [1e-8, 10.0]}})
    res = sweep(cfg)
    vals = {pt["value"]: pt["diff_mean"] for pt in res["series"]}
    assert vals[1e-8] == 0.0 and vals[10.0] > 0.1
    assert res["fits"] == []


def test_cli_sweep_override_needs_grid(tmp_path):
    cfg = _write(tmp_path, BASE)
    assert main(["sweep", "--config", str(cfg), "--parameter", "p"]) == 2
    assert main(["sweep", "--config", str(cfg), "--parameter", "p", "--grid", "0", "1", "--out", str(tmp_path / "o")]) == 0


def test_verify_suites(tmp_path):
    doc = {
        **BASE,
        "classifiers": ["logistic-regression"],
        "verify": {"suites": ["identity", "classifier", "general-loss", "strategic"], "n": 5000, "widths": [0.0]},
    }
    res = verify(parse_config(doc))
    assert all(c["verdict"] == "holds" for c in res["checks"])
    assert set(res["summary"]) == {"identity", "classifier", "general-loss", "strategic"}
    assert main(["verify", "--config", str(_write(tmp_path, doc)), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "verify.csv").exists()


def test_verify_rejects_csv_dataset():
    doc = {**BASE, "classifiers": ["logistic-regression"], "dataset": {"kind": "csv", "path": "x", "label_column": "y", "positive_value": 1}, "verify": {"suites": ["identity"]}}
    with pytest.raises(ConfigError):
        verify(parse_config(doc))


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.json")))
def test_shipped_configs_parse(name):
    parse_config(json.loads((CONFIGS / name).read_text()))


def test_csv_config_runs_through_cli(tmp_path):
    doc = json.loads((CONFIGS / "realdata_synthetic.json").read_text())
    doc["dataset"]["path"] = str(CONFIGS / "data" / "gaussians.csv")
    doc["replicates"] = 1
    doc["classifiers"] = ["logistic-regression"]
    doc["methods"] = [{"name": "proj", "searcher": {"kind": "hyperplane-projection"}}]
    assert main(["run", "--config", str(_write(tmp_path, doc)), "--out", str(tmp_path / "o")]) == 0
    archive = json.loads((tmp_path / "o" / "archive.json").read_text())
    assert "oracle" in archive and archive["rows"][0]["flags"]["class_imbalance"] is False
