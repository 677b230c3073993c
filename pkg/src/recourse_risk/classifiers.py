"""Probabilistic classifiers, Platt calibration and the boundary-calibration statistic.

Every classifier exposes ``decision_function`` (log-odds of class +1),
``predict_proba`` (the sigmoid of it) and ``predict``, which thresholds the
log-odds at zero so that points with ``g(x) = 1/2`` are classified ``+1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit, logit, logsumexp

from .core import POSITIVE, RngSpec, as_labels, as_points, make_rng, sign
from .trees import Binner, Tree, gini_gain, gini_leaf, grow_tree, newton_leaf, squared_error_gain

FAMILIES = ("logistic-regression", "gaussian-nb", "qda", "decision-tree", "mlp", "gbt")
DEFAULT_MLP_LAYERS = ((4,), (4, 4), (8,), (8, 16), (8, 16, 8))
COV_FLOOR = 1e-6


class Classifier:
    """Base class. Subclasses implement :meth:`decision_function`."""

    family = "base"
    continuous = True
    differentiable = False

    def decision_function(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return sign(self.decision_function(X))

    @property
    def metadata(self) -> dict:
        return {"family": self.family, "continuous": self.continuous}

    def to_dict(self) -> dict:
        return dict(self.metadata)


class LinearClassifier(Classifier):
    """``g(x) = sigmoid(x.theta + theta0)``; the boundary is the hyperplane ``x.theta + theta0 = 0``."""

    differentiable = True

    def __init__(self, theta, theta0: float = 0.0, family: str = "linear", extra: Optional[dict] = None):
        self.theta = np.asarray(theta, dtype=float).ravel()
        self.theta0 = float(theta0)
        self.family = family
        self.extra = dict(extra or {})

    def decision_function(self, X):
        return as_points(X) @ self.theta + self.theta0

    def to_dict(self):
        return {**self.metadata, "theta": self.theta.tolist(), "theta0": self.theta0, **self.extra}


class PosteriorClassifier(Classifier):
    """Thresholds an exact posterior, supplied as a log-odds function."""

    def __init__(self, log_odds: Callable, name: str = "bayes"):
        self._log_odds = log_odds
        self.family = name

    def decision_function(self, X):
        return np.asarray(self._log_odds(as_points(X)), dtype=float)


class PlattCalibrated(Classifier):
    """``g'(x) = sigmoid(a * s(x) + b)`` on top of a base classifier's log-odds score ``s``."""

    def __init__(self, base: Classifier, a: float, b: float):
        self.base, self.a, self.b = base, float(a), float(b)
        self.family = f"platt({base.family})"
        self.continuous = base.continuous
        self.differentiable = base.differentiable

    def decision_function(self, X):
        return self.a * self.base.decision_function(X) + self.b

    def to_dict(self):
        return {**self.metadata, "a": self.a, "b": self.b, "base": self.base.to_dict()}


# ---------------------------------------------------------------------------
# Logistic regression


def balanced_weights(y: np.ndarray) -> np.ndarray:
    """Inverse-frequency example weights, ``n / (2 n_class)``."""
    n = len(y)
    n_pos = np.sum(y == POSITIVE)
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        return np.ones(n)
    return np.where(y == POSITIVE, n / (2.0 * n_pos), n / (2.0 * n_neg))


def logistic_objective(w: np.ndarray, X: np.ndarray, y: np.ndarray, sample_weight: np.ndarray, C: float = 1.0):
    """Weighted mean cross-entropy plus ``|theta|^2 / (2 C n)``; returns (value, gradient).

    ``w`` stacks ``theta`` and the (unpenalised) intercept last.
    """
    n = len(y)
    z = X @ w[:-1] + w[-1]
    t = (y == POSITIVE).astype(float)
    # log(1 + e^z) - t z, evaluated stably
    nll = np.logaddexp(0.0, z) - t * z
    value = np.dot(sample_weight, nll) / n + np.dot(w[:-1], w[:-1]) / (2.0 * C * n)
    r = sample_weight * (expit(z) - t) / n
    grad = np.empty_like(w)
    grad[:-1] = X.T @ r + w[:-1] / (C * n)
    grad[-1] = r.sum()
    return value, grad


def fit_logistic_regression(X, y, C: float = 1.0, class_weight: str = "balanced", tol: float = 1e-6, max_iter: int = 10_000):
    X, y = as_points(X), as_labels(y)
    n, d = X.shape
    s = balanced_weights(y) if class_weight == "balanced" else np.ones(n)
    t = (y == POSITIVE).astype(float)
    Xt = np.hstack([X, np.ones((n, 1))])
    reg = np.full(d + 1, 1.0 / (C * n))
    reg[-1] = 0.0
    w = np.zeros(d + 1)
    value, grad = logistic_objective(w, X, y, s, C)
    n_iter = 0
    # Newton iterations with backtracking on the strictly convex objective
    while np.linalg.norm(grad) >= tol and n_iter < max_iter:
        p = expit(Xt @ w)
        H = (Xt * (s * p * (1 - p) / n)[:, None]).T @ Xt + np.diag(reg)
        step = np.linalg.solve(H + 1e-12 * np.eye(d + 1), grad)
        lr = 1.0
        while True:
            w_new = w - lr * step
            v_new, g_new = logistic_objective(w_new, X, y, s, C)
            if v_new <= value - 1e-4 * lr * np.dot(grad, step) or lr < 1e-10:
                break
            lr *= 0.5
        w, value, grad = w_new, v_new, g_new
        n_iter += 1
    extra = {"C": C, "class_weight": class_weight, "n_iter": n_iter, "grad_norm": float(np.linalg.norm(grad))}
    return LinearClassifier(w[:-1], w[-1], family="logistic-regression", extra=extra)


# ---------------------------------------------------------------------------
# Gaussian generative classifiers


class GaussianGenerative(Classifier):
    """Class-conditional Gaussians (diagonal for naive Bayes, full for QDA)."""

    differentiable = True

    def __init__(self, means, covs, log_priors, family: str, regularized: bool = False):
        self.means = np.asarray(means, dtype=float)  # (2, d), rows: class -1, class +1
        self.covs = np.asarray(covs, dtype=float)  # (2, d, d)
        self.log_priors = np.asarray(log_priors, dtype=float)
        self.family = family
        self.regularized = regularized
        self._chol = [np.linalg.cholesky(c) for c in self.covs]
        self._logdet = np.array([2.0 * np.log(np.diag(L)).sum() for L in self._chol])

    def _log_joint(self, X):
        X = as_points(X)
        out = np.empty((len(X), 2))
        for k in range(2):
            sol = np.linalg.solve(self._chol[k], (X - self.means[k]).T)
            out[:, k] = -0.5 * np.sum(sol**2, axis=0) - 0.5 * self._logdet[k] + self.log_priors[k]
        return out

    def decision_function(self, X):
        lj = self._log_joint(X)
        return lj[:, 1] - lj[:, 0]

    @property
    def metadata(self):
        return {**super().metadata, "regularized": self.regularized, "cov_floor": COV_FLOOR}

    def to_dict(self):
        return {
            **self.metadata,
            "means": self.means.tolist(),
            "covs": self.covs.tolist(),
            "log_priors": self.log_priors.tolist(),
        }


def fit_gaussian(X, y, diagonal: bool):
    X, y = as_points(X), as_labels(y)
    d = X.shape[1]
    means, covs, priors = [], [], []
    regularized = False
    for label in (-1, 1):
        Xc = X[y == label]
        if len(Xc) < 2:
            raise ValueError("need at least two examples per class")
        means.append(Xc.mean(axis=0))
        if diagonal:
            cov = np.diag(Xc.var(axis=0))
        else:
            cov = np.cov(Xc, rowvar=False, bias=False).reshape(d, d)
        if np.linalg.eigvalsh(cov).min() < COV_FLOOR:
            regularized = True
        covs.append(cov + COV_FLOOR * np.eye(d))
        priors.append(len(Xc) / len(X))
    family = "gaussian-nb" if diagonal else "qda"
    return GaussianGenerative(means, covs, np.log(priors), family, regularized)


# ---------------------------------------------------------------------------
# Trees


class DecisionTree(Classifier):
    family = "decision-tree"
    continuous = False

    def __init__(self, tree: Tree, max_depth: int):
        self.tree = tree
        self.max_depth = max_depth

    def predict_proba(self, X):
        return self.tree.predict(as_points(X))

    def decision_function(self, X):
        return logit(np.clip(self.predict_proba(X), 1e-15, 1 - 1e-15))

    def to_dict(self):
        return {**self.metadata, "max_depth": self.max_depth, "tree": self.tree.to_dict()}


def fit_decision_tree(X, y, max_depth: int = 4, class_weight: str = "balanced", max_bins: int = 4096):
    if max_depth < 1:
        raise ValueError("decision-tree max_depth must be >= 1")
    X, y = as_points(X), as_labels(y)
    w = balanced_weights(y) if class_weight == "balanced" else np.ones(len(y))
    stats = np.stack([w, w * (y == POSITIVE), np.ones(len(y))], axis=1)
    binner = Binner(X, max_bins=max_bins)
    tree = grow_tree(binner.transform(X), binner, stats, gini_gain, gini_leaf, max_depth)
    return DecisionTree(tree, max_depth)


class GradientBoosting(Classifier):
    """Log-loss gradient boosting with depth-limited regression trees."""

    family = "gbt"
    continuous = False

    def __init__(self, init: float, trees: Sequence[Tree], learning_rate: float, params: dict):
        self.init = float(init)
        self.trees = list(trees)
        self.learning_rate = float(learning_rate)
        self.params = dict(params)

    def decision_function(self, X):
        X = as_points(X)
        F = np.full(len(X), self.init)
        for t in self.trees:
            F += self.learning_rate * t.predict(X)
        return F

    def staged_decision_function(self, X, stages):
        """Log-odds after each number of trees in ``stages``, as a dict."""
        X = as_points(X)
        F = np.full(len(X), self.init)
        want = set(int(s) for s in stages)
        out = {}
        if 0 in want:
            out[0] = F.copy()
        for k, t in enumerate(self.trees, start=1):
            F += self.learning_rate * t.predict(X)
            if k in want:
                out[k] = F.copy()
        return out

    def truncated(self, n_estimators: int) -> "GradientBoosting":
        params = {**self.params, "n_estimators": int(n_estimators)}
        return GradientBoosting(self.init, self.trees[:n_estimators], self.learning_rate, params)

    def to_dict(self):
        return {**self.metadata, **self.params, "init": self.init, "trees": [t.to_dict() for t in self.trees]}


def fit_gradient_boosting(
    X,
    y,
    learning_rate: float = 0.1,
    n_estimators: int = 10,
    subsample: float = 1.0,
    max_depth: int = 3,
    seed: int = 0,
    max_bins: int = 255,
):
    X, y = as_points(X), as_labels(y)
    n = len(y)
    t = (y == POSITIVE).astype(float)
    prior = np.clip(t.mean(), 1e-6, 1 - 1e-6)
    init = float(np.log(prior / (1 - prior)))
    F = np.full(n, init)
    binner = Binner(X, max_bins=max_bins)
    bins = binner.transform(X)
    rng = make_rng(RngSpec(seed).substream("gbt"))
    n_sub = max(1, int(round(subsample * n)))
    trees = []
    for _ in range(n_estimators):
        p = expit(F)
        stats = np.stack([t - p, p * (1 - p), np.ones(n)], axis=1)
        rows = np.sort(rng.choice(n, n_sub, replace=False)) if n_sub < n else None
        tree = grow_tree(bins, binner, stats, squared_error_gain, newton_leaf, max_depth, rows=rows)
        trees.append(tree)
        F += learning_rate * tree.predict(X)
    params = dict(learning_rate=learning_rate, n_estimators=n_estimators, subsample=subsample, max_depth=max_depth)
    return GradientBoosting(init, trees, learning_rate, params)


# ---------------------------------------------------------------------------
# Multi-layer perceptron


class MLP(Classifier):
    """tanh hidden layers and a single logit output."""

    differentiable = True

    def __init__(self, weights, biases, hidden_layer_sizes, info: Optional[dict] = None):
        self.weights = [np.asarray(W, dtype=float) for W in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        self.hidden_layer_sizes = tuple(hidden_layer_sizes)
        self.family = "mlp" + str(self.hidden_layer_sizes).replace(" ", "").replace(",)", ")")
        self.info = dict(info or {})

    def decision_function(self, X):
        h = as_points(X)
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ W + b)
        return (h @ self.weights[-1] + self.biases[-1])[:, 0]

    def to_dict(self):
        return {
            **self.metadata,
            "hidden_layer_sizes": list(self.hidden_layer_sizes),
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
            **self.info,
        }


def fit_mlp(
    X,
    y,
    hidden_layer_sizes=(8, 16),
    learning_rate: float = 1e-3,
    epochs: int = 200,
    batch_size: int = 32,
    alpha: float = 1e-4,
    tol: float = 1e-4,
    n_iter_no_change: int = 10,
    seed: int = 0,
):
    """Mini-batch Adam on the L2-penalised cross-entropy."""
    X, y = as_points(X), as_labels(y)
    n, d = X.shape
    t = (y == POSITIVE).astype(float)
    rng = make_rng(RngSpec(seed).substream("mlp"))
    sizes = [d, *hidden_layer_sizes, 1]
    shapes = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        shapes += [(fan_in, fan_out), (fan_out,)]
    total = sum(int(np.prod(s)) for s in shapes)
    params = np.empty(total)
    grads = np.zeros(total)
    views, gviews, off = [], [], 0
    for s in shapes:
        k = int(np.prod(s))
        views.append(params[off : off + k].reshape(s))
        gviews.append(grads[off : off + k].reshape(s))
        off += k
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        views[2 * i][...] = rng.uniform(-bound, bound, (fan_in, fan_out))
        views[2 * i + 1][...] = rng.uniform(-bound, bound, fan_out)
    Ws, bs = views[0::2], views[1::2]
    gWs, gbs = gviews[0::2], gviews[1::2]
    m = np.zeros(total)
    v = np.zeros(total)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    best, stall, epoch_losses = np.inf, 0, []
    L = len(Ws)
    for _ in range(epochs):
        order = rng.permutation(n)
        acc = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            nb = len(idx)
            acts = [X[idx]]
            for k in range(L - 1):
                acts.append(np.tanh(acts[-1] @ Ws[k] + bs[k]))
            z = (acts[-1] @ Ws[-1] + bs[-1])[:, 0]
            tb = t[idx]
            acc += float(np.sum(np.logaddexp(0.0, z) - tb * z))
            delta = ((expit(z) - tb) / nb)[:, None]
            for k in range(L - 1, -1, -1):
                gWs[k][...] = acts[k].T @ delta + alpha * Ws[k] / nb
                gbs[k][...] = delta.sum(axis=0)
                if k:
                    delta = (delta @ Ws[k].T) * (1.0 - acts[k] ** 2)
            step += 1
            m *= beta1
            m += (1 - beta1) * grads
            v *= beta2
            v += (1 - beta2) * grads**2
            lr_t = learning_rate * np.sqrt(1 - beta2**step) / (1 - beta1**step)
            params -= lr_t * m / (np.sqrt(v) + eps)
        loss = acc / n + 0.5 * alpha * sum(float(np.sum(W**2)) for W in Ws) / n
        epoch_losses.append(loss)
        if loss > best - tol:
            stall += 1
        else:
            stall = 0
        best = min(best, loss)
        if stall >= n_iter_no_change:
            break
    info = {
        "learning_rate": learning_rate,
        "epochs_run": len(epoch_losses),
        "max_epochs": epochs,
        "batch_size": batch_size,
        "alpha": alpha,
        "final_loss": epoch_losses[-1],
    }
    return MLP([W.copy() for W in Ws], [b.copy() for b in bs], hidden_layer_sizes, info)


# ---------------------------------------------------------------------------
# Training entry point


@dataclass(frozen=True)
class TrainConfig:
    family: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown classifier family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "decision-tree" and int(self.hyperparameters.get("max_depth", 4)) < 1:
            raise ValueError("decision-tree max_depth must be >= 1")


def fit(config: TrainConfig, X, y) -> Classifier:
    """Train a classifier of ``config.family``; deterministic given (seed, data)."""
    hp = dict(config.hyperparameters)
    if config.family == "logistic-regression":
        return fit_logistic_regression(X, y, **hp)
    if config.family == "gaussian-nb":
        return fit_gaussian(X, y, diagonal=True)
    if config.family == "qda":
        return fit_gaussian(X, y, diagonal=False)
    if config.family == "decision-tree":
        return fit_decision_tree(X, y, **hp)
    if config.family == "mlp":
        if "hidden_layer_sizes" in hp:
            hp["hidden_layer_sizes"] = tuple(hp["hidden_layer_sizes"])
        return fit_mlp(X, y, seed=config.seed, **hp)
    return fit_gradient_boosting(X, y, seed=config.seed, **hp)


# ---------------------------------------------------------------------------
# Calibration


def fit_platt(scores: np.ndarray, y: np.ndarray, max_iter: int = 100, tol: float = 1e-10):
    """Minimise the cross-entropy of ``sigmoid(a s + b)`` by Newton's method."""
    y = as_labels(y)
    if np.all(y == y[0]):
        raise ValueError("calibration data must contain both classes")
    s = np.asarray(scores, dtype=float)
    t = (y == POSITIVE).astype(float)
    A = np.stack([s, np.ones_like(s)], axis=1)
    w = np.array([1.0, 0.0])

    def nll(w):
        z = A @ w
        return float(np.mean(np.logaddexp(0.0, z) - t * z))

    value = nll(w)
    for _ in range(max_iter):
        p = expit(A @ w)
        grad = A.T @ (p - t) / len(t)
        if np.linalg.norm(grad) < tol:
            break
        H = (A * (p * (1 - p))[:, None]).T @ A / len(t) + 1e-12 * np.eye(2)
        step = np.linalg.solve(H, grad)
        lr = 1.0
        while lr > 1e-10:
            w_new = w - lr * step
            v_new = nll(w_new)
            if v_new <= value:
                break
            lr *= 0.5
        w, value = w_new, v_new
    return float(w[0]), float(w[1])


def platt_calibrate(classifier: Classifier, X, y) -> PlattCalibrated:
    X, y = as_points(X), as_labels(y)
    if len(y) == 0:
        raise ValueError("calibration data is empty")
    a, b = fit_platt(classifier.decision_function(X), y)
    return PlattCalibrated(classifier, a, b)


def reliability_slope(proba, y, n_bins: int = 10) -> float:
    """Count-weighted least-squares slope of observed frequency on mean prediction, per bin."""
    proba = np.asarray(proba, dtype=float)
    t = (as_labels(y) == POSITIVE).astype(float)
    idx = np.minimum((proba * n_bins).astype(int), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    keep = counts > 0
    mean_p = np.bincount(idx, weights=proba, minlength=n_bins)[keep] / counts[keep]
    freq = np.bincount(idx, weights=t, minlength=n_bins)[keep] / counts[keep]
    w = counts[keep].astype(float)
    mp = np.average(mean_p, weights=w)
    mf = np.average(freq, weights=w)
    return float(np.sum(w * (mean_p - mp) * (freq - mf)) / np.sum(w * (mean_p - mp) ** 2))


# ---------------------------------------------------------------------------
# Assumption (B) statistic


def _posterior_fn(model):
    return model.posterior if hasattr(model, "posterior") else model


def boundary_epsilon(classifier: Classifier, model, negatives, recourse_map, weights=None) -> float:
    """Average of ``|1/2 - P(Y=+1 | X = phi(x0))|`` over negatively classified points.

    ``recourse_map`` is either a callable ``X0 -> counterfactuals`` or an
    array of precomputed counterfactuals aligned with ``negatives``.
    ``weights`` (e.g. acceptance probabilities, or exact masses) turn the
    plain mean into a weighted one.
    """
    X0 = np.asarray(negatives, dtype=float)
    if X0.size == 0:
        raise ValueError("boundary_epsilon needs at least one negative point")
    X0 = as_points(X0)
    cf = recourse_map(X0) if callable(recourse_map) else as_points(recourse_map)
    dev = np.abs(0.5 - np.asarray(_posterior_fn(model)(cf), dtype=float))
    if weights is None:
        return float(dev.mean())
    w = np.asarray(weights, dtype=float)
    if w.sum() <= 0:
        raise ValueError("boundary_epsilon weights sum to zero")
    return float(np.dot(w, dev) / w.sum())
