"""Tabular data: CSV loading, min-max normalisation, disjoint splits and a calibrated label oracle.

On real data the true posterior is unknown, so labels after recourse are
redrawn from a conditional oracle: a gradient-boosted tree ensemble chosen
by cross-validated grid search and Platt-calibrated on a held-out slice.
"""
from __future__ import annotations

import csv
import itertools
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .classifiers import (
    Classifier,
    GradientBoosting,
    TrainConfig,
    fit,
    fit_gradient_boosting,
    platt_calibrate,
    reliability_slope,
)
from .core import NEGATIVE, POSITIVE, ZERO_ONE, LossFunction, ResponseModel, RngSpec, as_labels
from .recourse import RecoursePolicy, apply_recourse
from .risk import RiskReport, risk_report

MISSING = {"", "na", "nan", "null", "none", "?"}

ORACLE_GRID = {
    "learning_rate": (0.05, 0.15),
    "n_estimators": (10, 20, 60),
    "subsample": (0.8, 0.9, 1.0),
    "max_depth": (1, 2, 3),
}

IMBALANCE_THRESHOLD = 0.10


@dataclass
class TabularDataset:
    feature_names: list
    X: np.ndarray
    y: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.y)

    def denormalize(self, X) -> np.ndarray:
        lo = np.asarray(self.provenance["mins"], dtype=float)
        hi = np.asarray(self.provenance["maxs"], dtype=float)
        span = np.where(hi > lo, hi - lo, 1.0)
        return np.asarray(X, dtype=float) * span + lo


def minmax_normalize(X: np.ndarray):
    """Scale each column to [0, 1]; constant columns become 0."""
    X = np.asarray(X, dtype=float)
    lo, hi = X.min(axis=0), X.max(axis=0)
    const = hi <= lo
    span = np.where(const, 1.0, hi - lo)
    out = (X - lo) / span
    out[:, const] = 0.0
    return out, lo, hi, const


def _is_missing(v: str) -> bool:
    return v.strip().lower() in MISSING


def _to_float(v: str):
    try:
        return float(v)
    except ValueError:
        return None


def load_csv(path, label_column: str, positive_value, categorical: Sequence[str] = ()) -> TabularDataset:
    """Read a comma-separated file with a header row.

    Rows with a missing entry are dropped (the count is recorded). Columns in
    ``categorical`` are one-hot encoded; any other non-numeric column is an
    error. Features are min-max normalised to [0, 1]. The label is ``+1``
    where the label column equals ``positive_value`` and ``-1`` elsewhere.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path} is empty")
        rows = [r for r in reader if any(c.strip() for c in r)]
    header = [h.strip() for h in header]
    if label_column not in header:
        raise ValueError(f"label column {label_column!r} not in header")
    unknown = set(categorical) - set(header)
    if unknown:
        raise ValueError(f"categorical columns not in header: {sorted(unknown)}")
    kept, dropped = [], 0
    for r in rows:
        if len(r) != len(header):
            raise ValueError(f"row has {len(r)} fields, header has {len(header)}")
        if any(_is_missing(v) for v in r):
            dropped += 1
            continue
        kept.append([v.strip() for v in r])
    if not kept:
        raise ValueError("no complete rows")
    li = header.index(label_column)
    pos = str(positive_value).strip()
    pos_num = _to_float(pos)

    def is_pos(v):
        if v == pos:
            return True
        fv = _to_float(v)
        return pos_num is not None and fv is not None and fv == pos_num

    y = np.array([POSITIVE if is_pos(r[li]) else NEGATIVE for r in kept], dtype=np.int64)
    names, columns, categories = [], [], {}
    for j, name in enumerate(header):
        if j == li:
            continue
        vals = [r[j] for r in kept]
        if name in categorical:
            levels = sorted(set(vals))
            categories[name] = levels
            for lev in levels:
                names.append(f"{name}={lev}")
                columns.append(np.array([v == lev for v in vals], dtype=float))
            continue
        nums = [_to_float(v) for v in vals]
        if any(v is None for v in nums):
            raise ValueError(f"column {name!r} is not numeric; list it as categorical to one-hot encode it")
        names.append(name)
        columns.append(np.array(nums, dtype=float))
    raw = np.stack(columns, axis=1)
    Xn, lo, hi, const = minmax_normalize(raw)
    if const.any():
        warnings.warn(f"constant columns normalised to 0: {[n for n, c in zip(names, const) if c]}")
    prov = {
        "source": str(path),
        "label_column": label_column,
        "positive_value": pos,
        "rows_read": len(rows),
        "rows_dropped_missing": dropped,
        "categories": categories,
        "mins": lo.tolist(),
        "maxs": hi.tolist(),
        "constant_columns": [n for n, c in zip(names, const) if c],
    }
    return TabularDataset(names, Xn, y, prov)


def write_csv(path, X, y, feature_names: Optional[Sequence[str]] = None, label_column: str = "label"):
    """Write features and ``+1/-1`` labels as a comma-separated file with a header."""
    X = np.asarray(X, dtype=float)
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(X.shape[1])]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names + [label_column])
        for row, label in zip(X, y):
            w.writerow([repr(float(v)) for v in row] + [int(label)])


# ---------------------------------------------------------------------------
# Splits


@dataclass(frozen=True)
class SplitPlan:
    n_cond_train: int
    n_cond_calib: int
    n_train: int
    n_test: int
    seed: int = 0

    @property
    def total(self) -> int:
        return self.n_cond_train + self.n_cond_calib + self.n_train + self.n_test

    @classmethod
    def preset(cls, name: str, seed: int = 0) -> "SplitPlan":
        sizes = {
            "credit": (40000, 10000, 5000, 1000),
            "adult": (30000, 10000, 5000, 1000),
            "census": (30000, 10000, 5000, 1000),
            "heloc": (5000, 2000, 5000, 1000),
        }
        if name not in sizes:
            raise ValueError(f"unknown preset {name!r}; expected one of {sorted(sizes)}")
        return cls(*sizes[name], seed=seed)

    def split(self, n_rows: int, replicate: int = 0) -> dict:
        """Disjoint index arrays for the four slices from a seeded permutation."""
        if self.total > n_rows:
            raise ValueError(f"split needs {self.total} rows, dataset has {n_rows}")
        perm = RngSpec(self.seed, replicate).substream("split").generator().permutation(n_rows)
        out, start = {}, 0
        for name, size in (
            ("cond_train", self.n_cond_train),
            ("cond_calib", self.n_cond_calib),
            ("train", self.n_train),
            ("test", self.n_test),
        ):
            out[name] = np.sort(perm[start : start + size])
            start += size
        return out


# ---------------------------------------------------------------------------
# Oracle


@dataclass
class ConditionalOracle:
    """Calibrated estimate of ``P(Y=+1 | x)``."""

    base: Classifier
    provenance: dict = field(default_factory=dict)

    def posterior(self, X) -> np.ndarray:
        return self.base.predict_proba(X)

    def predict_proba(self, X) -> np.ndarray:
        return self.base.predict_proba(X)


def _kfold(n: int, k: int, seed: int):
    perm = RngSpec(seed).substream("cv").generator().permutation(n)
    return np.array_split(perm, k)


def _mean_log_loss(F: np.ndarray, y: np.ndarray) -> float:
    t = (y == POSITIVE).astype(float)
    return float(np.mean(np.logaddexp(0.0, F) - t * F))


def train_oracle(
    dataset: TabularDataset,
    plan: SplitPlan,
    search_grid: Optional[dict] = None,
    folds: int = 5,
    seed: int = 0,
    indices: Optional[dict] = None,
) -> ConditionalOracle:
    """Grid-search a boosted tree ensemble by k-fold log loss, refit, then Platt-calibrate.

    Ensembles differing only in ``n_estimators`` share one fit per fold and
    are scored on its staged predictions.
    """
    grid = dict(ORACLE_GRID if search_grid is None else search_grid)
    idx = plan.split(len(dataset)) if indices is None else indices
    Xt, yt = dataset.X[idx["cond_train"]], dataset.y[idx["cond_train"]]
    Xc, yc = dataset.X[idx["cond_calib"]], dataset.y[idx["cond_calib"]]
    for name, ys in (("cond_train", yt), ("cond_calib", yc)):
        if len(ys) == 0 or np.all(ys == ys[0]):
            raise ValueError(f"{name} slice must contain both classes")
    stages = sorted(int(v) for v in grid["n_estimators"])
    parts = _kfold(len(yt), folds, seed)
    scores = {}
    for lr, sub, depth in itertools.product(grid["learning_rate"], grid["subsample"], grid["max_depth"]):
        losses = {s: [] for s in stages}
        for k in range(folds):
            val = parts[k]
            trn = np.concatenate([parts[j] for j in range(folds) if j != k])
            model = fit_gradient_boosting(Xt[trn], yt[trn], lr, stages[-1], sub, depth, seed=seed)
            staged = model.staged_decision_function(Xt[val], stages)
            for s in stages:
                losses[s].append(_mean_log_loss(staged[s], yt[val]) * len(val))
        for s in stages:
            scores[(lr, s, sub, depth)] = sum(losses[s]) / len(yt)
    best = min(sorted(scores), key=lambda key: scores[key])
    lr, n_est, sub, depth = best
    model = fit_gradient_boosting(Xt, yt, lr, n_est, sub, depth, seed=seed)
    calibrated = platt_calibrate(model, Xc, yc)
    prov = {
        "best": {"learning_rate": lr, "n_estimators": n_est, "subsample": sub, "max_depth": depth},
        "cv_log_loss": scores[best],
        "folds": folds,
        "grid": {k: list(v) for k, v in grid.items()},
        "platt": {"a": calibrated.a, "b": calibrated.b},
        "calibration_slope": reliability_slope(calibrated.predict_proba(Xc), yc),
    }
    return ConditionalOracle(calibrated, prov)


# ---------------------------------------------------------------------------
# Replay


def replay_experiment(
    dataset: TabularDataset,
    plan: SplitPlan,
    classifier_config: TrainConfig,
    policy: RecoursePolicy,
    response: ResponseModel,
    oracle=None,
    rng: Optional[RngSpec] = None,
    loss: LossFunction = ZERO_ONE,
    replicate: int = 0,
    indices: Optional[dict] = None,
):
    """Train on the train slice, then measure ``R_P`` and ``R_Q`` on the test slice.

    Users who move are relabeled from ``oracle`` (anything with a
    ``posterior`` or ``predict_proba``); ``R_P`` uses the recorded labels.
    Returns ``(report, classifier, batch)``.
    """
    idx = plan.split(len(dataset), replicate) if indices is None else indices
    if oracle is None:
        oracle = train_oracle(dataset, plan, indices=idx, seed=plan.seed)
    rng = rng if rng is not None else RngSpec(plan.seed, replicate)
    Xtr, ytr = dataset.X[idx["train"]], dataset.y[idx["train"]]
    clf = fit(classifier_config, Xtr, ytr)
    Xte, yte = dataset.X[idx["test"]], dataset.y[idx["test"]]
    batch = apply_recourse(policy, clf, oracle, response, Xte, yte, rng)
    report = risk_report(clf, batch, loss)
    neg_rate = float(np.mean(yte == NEGATIVE))
    report.flags = {
        "negative_base_rate": neg_rate,
        "class_imbalance": bool(neg_rate < IMBALANCE_THRESHOLD),
    }
    return report, clf, batch


def write_manifest(path, dataset: TabularDataset, plan: SplitPlan, indices: dict, extra: Optional[dict] = None):
    """Record split indices and normalisation parameters for exact reruns."""
    doc = {
        "plan": asdict(plan),
        "provenance": dataset.provenance,
        "feature_names": dataset.feature_names,
        "indices": {k: np.asarray(v).tolist() for k, v in indices.items()},
        **(extra or {}),
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")
    return doc
