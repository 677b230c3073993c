import json

import numpy as np
import pytest

from recourse_risk.classifiers import TrainConfig
from recourse_risk.core import COMPLIANT, RngSpec
from recourse_risk.gen_models import TwoGaussians
from recourse_risk.realdata import (
    SplitPlan,
    load_csv,
    minmax_normalize,
    replay_experiment,
    train_oracle,
    write_csv,
    write_manifest,
)
from recourse_risk.recourse import HyperplaneProjection, RecoursePolicy

SMALL_GRID = {"learning_rate": (0.15,), "n_estimators": (20, 60), "subsample": (1.0,), "max_depth": (1, 2)}


def test_load_csv_missing_categorical_and_normalisation(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("age,color,income,target\n30,red,10,yes\n40,blue,?,no\n50,blue,30,no\n20,red,20,yes\n", encoding="utf-8")
    ds = load_csv(p, "target", "yes", categorical=["color"])
    assert ds.provenance["rows_dropped_missing"] == 1
    assert ds.feature_names == ["age", "color=blue", "color=red", "income"]
    assert ds.y.tolist() == [1, -1, 1]
    assert ds.X.min() == 0.0 and ds.X.max() == 1.0
    np.testing.assert_allclose(ds.denormalize(ds.X)[:, 0], [30, 50, 20])


def test_load_csv_errors(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,label\n1,x,1\n2,y,0\n", encoding="utf-8")
    with pytest.raises(ValueError, match="not numeric"):
        load_csv(p, "label", 1)
    with pytest.raises(ValueError, match="label column"):
        load_csv(p, "target", 1)
    empty = tmp_path / "e.csv"
    empty.write_text("", encoding="utf-8")
    with pytest.raises(ValueError):
        load_csv(empty, "label", 1)


def test_numeric_positive_value_matches_float_text(tmp_path):
    p = tmp_path / "d.csv"
    write_csv(p, np.array([[0.0], [1.0], [2.0]]), np.array([1, -1, 1]))
    assert load_csv(p, "label", 1).y.tolist() == [1, -1, 1]


def test_minmax_constant_column_is_zero():
    Xn, lo, hi, const = minmax_normalize(np.array([[1.0, 5.0], [3.0, 5.0]]))
    assert const.tolist() == [False, True]
    assert Xn[:, 1].tolist() == [0.0, 0.0]


def test_split_plan_disjoint_and_reproducible():
    plan = SplitPlan(50, 20, 30, 10, seed=3)
    a, b = plan.split(200), plan.split(200)
    allidx = np.concatenate(list(a.values()))
    assert len(np.unique(allidx)) == len(allidx) == 110
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])
    assert not np.array_equal(plan.split(200, replicate=1)["test"], a["test"])
    with pytest.raises(ValueError):
        plan.split(100)
    with pytest.raises(ValueError):
        SplitPlan.preset("mnist")
    assert SplitPlan.preset("heloc").total == 13_000


@pytest.fixture(scope="module")
def synthetic_csv(tmp_path_factory):
    model = TwoGaussians()
    X, y = model.sample(6000, RngSpec(42))
    path = tmp_path_factory.mktemp("csv") / "gauss.csv"
    write_csv(path, X, y)
    return model, load_csv(path, "label", 1)


def test_oracle_tracks_true_posterior(synthetic_csv):
    model, ds = synthetic_csv
    plan = SplitPlan(3000, 1000, 1500, 500, seed=0)
    oracle = train_oracle(ds, plan, search_grid=SMALL_GRID, folds=3)
    idx = plan.split(len(ds))
    Xte = ds.X[idx["test"]]
    mae = np.mean(np.abs(oracle.posterior(Xte) - model.posterior(ds.denormalize(Xte))))
    assert mae < 0.05
    assert oracle.provenance["calibration_slope"] == pytest.approx(1.0, abs=0.2)
    assert oracle.provenance["best"]["n_estimators"] in (20, 60)


def test_oracle_rejects_one_class_slice(synthetic_csv):
    _, ds = synthetic_csv
    plan = SplitPlan(100, 50, 10, 10)
    idx = plan.split(len(ds))
    pos = np.flatnonzero(ds.y == 1)
    idx["cond_calib"] = pos[:50]
    with pytest.raises(ValueError, match="both classes"):
        train_oracle(ds, plan, search_grid=SMALL_GRID, indices=idx)


def test_replay_flags_and_manifest(synthetic_csv, tmp_path):
    model, ds = synthetic_csv
    plan = SplitPlan(3000, 1000, 1500, 500, seed=0)
    truth = lambda Z: model.posterior(ds.denormalize(Z))
    rep, clf, batch = replay_experiment(ds, plan, TrainConfig("logistic-regression"), RecoursePolicy(HyperplaneProjection()), COMPLIANT, oracle=truth)
    assert rep.r_q > rep.r_p
    assert rep.flags["class_imbalance"] is False
    doc = write_manifest(tmp_path / "m.json", ds, plan, plan.split(len(ds)))
    assert json.loads((tmp_path / "m.json").read_text())["plan"]["n_test"] == 500
    assert len(doc["indices"]["test"]) == 500


def test_replay_class_imbalance_flag(tmp_path):
    g = np.random.default_rng(0)
    X = g.normal(size=(400, 2))
    y = np.where(g.random(400) < 0.95, 1, -1)
    y[:4] = -1
    write_csv(tmp_path / "imb.csv", X, y)
    ds = load_csv(tmp_path / "imb.csv", "label", 1)
    plan = SplitPlan(100, 100, 100, 100)
    rep, _, _ = replay_experiment(ds, plan, TrainConfig("logistic-regression"), RecoursePolicy(HyperplaneProjection()), COMPLIANT, oracle=lambda Z: np.full(len(Z), 0.9))
    assert rep.flags["class_imbalance"] is True
