"""Generative models with exact posteriors ``P(Y=+1 | X0 = x)``.

``TwoGaussians`` has a closed logistic posterior. ``MoonsModel`` and
``CirclesModel`` put Gaussian noise around arcs, and their posteriors are
midpoint Riemann sums over the arc parameter. ``DiscreteGridModel`` is a
finite table that supports exact enumeration of every risk.
"""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np
from scipy.special import expit, logsumexp, ndtr

from .classifiers import Classifier, LinearClassifier, PosteriorClassifier
from .core import (
    NEGATIVE,
    POSITIVE,
    ZERO_ONE,
    LossFunction,
    ResponseModel,
    RngLike,
    as_points,
    loss_eval,
    make_rng,
)
from .recourse import RecoursePolicy, accept_prob


class GenerativeModel:
    """Joint law of ``(X0, Y)``; subclasses provide ``sample`` and ``log_odds``."""

    name = "model"

    def sample(self, n: int, rng: RngLike = None):
        raise NotImplementedError

    def log_odds(self, X) -> np.ndarray:
        raise NotImplementedError

    def posterior(self, X) -> np.ndarray:
        return expit(self.log_odds(X))

    def describe(self) -> dict:
        return {"name": self.name}


def _check_n(n):
    if int(n) < 1:
        raise ValueError("n must be >= 1")
    return int(n)


class TwoGaussians(GenerativeModel):
    """``X0 | Y=+1 ~ N(mu, sigma)``, ``X0 | Y=-1 ~ N(nu, sigma)``, ``P(Y=+1) = class_prior``."""

    name = "gaussians"

    def __init__(self, mu=(1.0, 1.0), nu=(-1.0, -1.0), sigma=((1.0, 0.5), (0.5, 1.0)), class_prior: float = 0.5):
        self.mu = np.asarray(mu, dtype=float)
        self.nu = np.asarray(nu, dtype=float)
        self.sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        d = len(self.mu)
        if self.nu.shape != (d,) or self.sigma.shape != (d, d):
            raise ValueError("mu, nu and sigma dimensions disagree")
        if not np.allclose(self.sigma, self.sigma.T):
            raise ValueError("sigma must be symmetric")
        try:
            self._chol = np.linalg.cholesky(self.sigma)
        except np.linalg.LinAlgError as exc:
            raise ValueError("sigma must be positive definite") from exc
        if not 0.0 < class_prior < 1.0:
            raise ValueError("class_prior must lie in (0, 1)")
        self.class_prior = float(class_prior)
        prec = np.linalg.inv(self.sigma)
        self.theta = prec @ (self.mu - self.nu)
        self.theta0 = float(
            -0.5 * (self.mu @ prec @ self.mu - self.nu @ prec @ self.nu)
            + np.log(self.class_prior / (1.0 - self.class_prior))
        )
        self.mahalanobis = float(np.sqrt((self.mu - self.nu) @ prec @ (self.mu - self.nu)))

    @property
    def dim(self):
        return len(self.mu)

    def sample(self, n, rng=None):
        n = _check_n(n)
        gen = make_rng(rng)
        y = np.where(gen.random(n) < self.class_prior, POSITIVE, NEGATIVE)
        eps = gen.standard_normal((n, self.dim)) @ self._chol.T
        X = np.where((y == POSITIVE)[:, None], self.mu, self.nu) + eps
        return X, y

    def log_odds(self, X):
        return as_points(X) @ self.theta + self.theta0

    def bounds(self, k: float = 4.0) -> np.ndarray:
        sd = np.sqrt(np.diag(self.sigma))
        lo = np.minimum(self.mu, self.nu) - k * sd
        hi = np.maximum(self.mu, self.nu) + k * sd
        return np.stack([lo, hi], axis=1)

    def describe(self):
        return {
            "name": self.name,
            "mu": self.mu.tolist(),
            "nu": self.nu.tolist(),
            "sigma": self.sigma.tolist(),
            "class_prior": self.class_prior,
        }


class ArcModel(GenerativeModel):
    """Gaussian noise around a uniformly parametrised curve per class."""

    u_range = np.pi

    def __init__(self, noise: float = 0.2, arc_resolution: int = 1000):
        if noise <= 0:
            raise ValueError("noise must be positive")
        if arc_resolution < 1:
            raise ValueError("arc_resolution must be >= 1")
        self.noise = float(noise)
        self.arc_resolution = int(arc_resolution)
        self.class_prior = 0.5
        u = (np.arange(self.arc_resolution) + 0.5) * self.u_range / self.arc_resolution
        self._arcs = (self.curve(u, NEGATIVE), self.curve(u, POSITIVE))

    def curve(self, u: np.ndarray, label: int) -> np.ndarray:
        raise NotImplementedError

    def sample(self, n, rng=None):
        n = _check_n(n)
        gen = make_rng(rng)
        y = np.where(gen.random(n) < self.class_prior, POSITIVE, NEGATIVE)
        u = gen.random(n) * self.u_range
        centers = np.where((y == POSITIVE)[:, None], self.curve(u, POSITIVE), self.curve(u, NEGATIVE))
        return centers + self.noise * gen.standard_normal((n, 2)), y

    def _log_density(self, X, arc):
        # log of sum_k exp(-|x - a_k|^2 / (2 s^2)) up to a term shared by both classes
        s2 = self.noise**2
        return logsumexp((X @ arc.T - 0.5 * np.sum(arc**2, axis=1)) / s2, axis=1)

    def log_odds(self, X):
        X = as_points(X)
        out = np.empty(len(X))
        for s in range(0, len(X), 4096):
            chunk = X[s : s + 4096]
            out[s : s + 4096] = self._log_density(chunk, self._arcs[1]) - self._log_density(chunk, self._arcs[0])
        return out

    def describe(self):
        return {"name": self.name, "noise": self.noise, "arc_resolution": self.arc_resolution}


class MoonsModel(ArcModel):
    """Class +1 around ``(cos u, sin u)``, class -1 around ``(1 - cos u, 1/2 - sin u)``, ``u in [0, pi)``."""

    name = "moons"
    u_range = np.pi

    def curve(self, u, label):
        if label == POSITIVE:
            return np.stack([np.cos(u), np.sin(u)], axis=-1)
        return np.stack([1.0 - np.cos(u), 0.5 - np.sin(u)], axis=-1)

    def bounds(self, k: float = 4.0):
        pad = k * self.noise
        return np.array([[-1.0 - pad, 2.0 + pad], [-0.5 - pad, 1.0 + pad]])


class CirclesModel(ArcModel):
    """Class +1 around the circle of radius ``scale``, class -1 around the unit circle."""

    name = "circles"
    u_range = 2.0 * np.pi

    def __init__(self, noise: float = 0.2, scale: float = 0.6, arc_resolution: int = 1000):
        if not 0.0 < scale < 1.0:
            raise ValueError("scale must lie strictly between 0 and 1")
        self.scale = float(scale)
        super().__init__(noise, arc_resolution)

    def curve(self, u, label):
        circle = np.stack([np.cos(u), np.sin(u)], axis=-1)
        return self.scale * circle if label == POSITIVE else circle

    def bounds(self, k: float = 4.0):
        r = 1.0 + k * self.noise
        return np.array([[-r, r], [-r, r]])

    def describe(self):
        return {**super().describe(), "scale": self.scale}


class DiscreteGridModel(GenerativeModel):
    """Finite support with a joint table ``joint_probs[i] = (P(x_i, -1), P(x_i, +1))``.

    Posterior queries off the support raise unless ``posterior_extension``
    (a callable) is supplied. Points of zero mass have posterior 1/2 unless
    listed in ``posterior_values``.
    """

    name = "discrete-grid"

    def __init__(self, points, joint_probs, posterior_extension: Optional[Callable] = None, posterior_values=None):
        self.points = as_points(points)
        jp = np.asarray(joint_probs, dtype=float)
        if jp.shape != (len(self.points), 2):
            raise ValueError("joint_probs must have shape (n_points, 2)")
        if np.any(jp < 0) or not np.isclose(jp.sum(), 1.0, atol=1e-12):
            raise ValueError("joint probabilities must be nonnegative and sum to 1")
        self.joint_probs = jp
        self.marginal = jp.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            post = np.where(self.marginal > 0, jp[:, 1] / self.marginal, 0.5)
        if posterior_values is not None:
            pv = np.asarray(posterior_values, dtype=float)
            post = np.where(self.marginal > 0, post, pv)
        self.table = post
        self.posterior_extension = posterior_extension
        self._index = {p.tobytes(): i for i, p in enumerate(self.points)}
        if len(self._index) != len(self.points):
            raise ValueError("grid points must be distinct")
        self.class_prior = float(jp[:, 1].sum())

    def index_of(self, X, strict: bool = True) -> np.ndarray:
        X = as_points(X)
        idx = np.array([self._index.get(np.ascontiguousarray(x).tobytes(), -1) for x in X], dtype=np.int64)
        if strict and np.any(idx < 0):
            raise ValueError("point is not on the model's grid")
        return idx

    def posterior(self, X):
        X = as_points(X)
        idx = self.index_of(X, strict=self.posterior_extension is None)
        out = np.empty(len(X))
        on = idx >= 0
        out[on] = self.table[idx[on]]
        if not on.all():
            out[~on] = np.asarray(self.posterior_extension(X[~on]), dtype=float)
        return out

    def log_odds(self, X):
        p = self.posterior(X)
        with np.errstate(divide="ignore"):
            return np.log(p) - np.log1p(-p)

    def sample(self, n, rng=None):
        n = _check_n(n)
        gen = make_rng(rng)
        flat = self.joint_probs.ravel()
        cdf = np.cumsum(flat)
        k = np.minimum(np.searchsorted(cdf, gen.random(n) * cdf[-1], side="right"), len(flat) - 1)
        return self.points[k // 2].copy(), np.where(k % 2 == 1, POSITIVE, NEGATIVE)

    def enumerate(self):
        """Every (point, label) with positive mass as ``(X, y, weight)``."""
        X = np.repeat(self.points, 2, axis=0)
        y = np.tile([NEGATIVE, POSITIVE], len(self.points))
        w = self.joint_probs.ravel()
        keep = w > 0
        return X[keep], y[keep], w[keep]

    def bounds(self, k: float = 0.0):
        return np.stack([self.points.min(axis=0), self.points.max(axis=0)], axis=1)

    def describe(self):
        return {"name": self.name, "points": self.points.tolist(), "joint_probs": self.joint_probs.tolist()}


def sample(model: GenerativeModel, n: int, rng: RngLike = None):
    return model.sample(n, rng)


def posterior(model: GenerativeModel, x) -> np.ndarray:
    return model.posterior(x)


def bayes_classifier(model: GenerativeModel) -> Classifier:
    """Thresholded exact posterior; affine for two Gaussians with shared covariance."""
    if isinstance(model, TwoGaussians):
        return LinearClassifier(model.theta, model.theta0, family="bayes")
    return PosteriorClassifier(model.log_odds, name="bayes")


def gaussian_bayes_risk(model: TwoGaussians) -> float:
    """Exact 0/1 risk of the Bayes rule for two Gaussians with shared covariance."""
    if not isinstance(model, TwoGaussians):
        raise TypeError("expected a TwoGaussians model")
    return gaussian_linear_risk(model, model.theta, model.theta0)


def gaussian_linear_risk(model: TwoGaussians, theta, theta0: float) -> float:
    """Exact 0/1 risk of ``sign(x.theta + theta0)`` under a TwoGaussians model."""
    theta = np.asarray(theta, dtype=float)
    sd = float(np.sqrt(theta @ model.sigma @ theta))
    m_pos = float(model.mu @ theta + theta0)
    m_neg = float(model.nu @ theta + theta0)
    pi = model.class_prior
    if sd == 0.0:
        return float(pi * (m_pos < 0) + (1 - pi) * (m_neg >= 0))
    # class +1 errs when the score is negative, class -1 when it is nonnegative
    return float(pi * ndtr(-m_pos / sd) + (1 - pi) * ndtr(m_neg / sd))


# ---------------------------------------------------------------------------
# Exact enumeration


def _losses(loss: LossFunction, classifier: Classifier, X: np.ndarray):
    """Loss at X for labels -1 and +1, as two arrays."""
    pred = classifier.predict(X) if loss.kind == "zero-one" else classifier.predict_proba(X)
    n = len(X)
    return loss_eval(loss, pred, np.full(n, NEGATIVE)), loss_eval(loss, pred, np.full(n, POSITIVE))


def _exact_parts(model: DiscreteGridModel, classifier, policy: RecoursePolicy, cf=None):
    X0 = model.points
    m = model.marginal
    p0 = model.table
    f0 = classifier.predict(X0)
    if cf is None:
        cf = policy.searcher(classifier, X0, policy.cost)
    cf = as_points(cf)
    model.index_of(cf[f0 == NEGATIVE])
    r = np.where(f0 == NEGATIVE, accept_prob(policy.acceptance, X0, cf), 0.0)
    return X0, m, p0, f0, cf, r


def exact_risks_discrete(
    model: DiscreteGridModel,
    classifier: Classifier,
    policy: RecoursePolicy,
    response: ResponseModel,
    loss: LossFunction = ZERO_ONE,
    cf=None,
):
    """``(R_P, R_Q)`` by summing over every outcome ``(x0, b, x, y)``."""
    X0, m, p0, f0, cf, r = _exact_parts(model, classifier, policy, cf)
    l0_neg, l0_pos = _losses(loss, classifier, X0)
    stay = m * ((1 - p0) * l0_neg + p0 * l0_pos)
    r_p = float(stay.sum())
    moved = f0 == NEGATIVE
    r_q = float(np.sum((1 - r) * stay))
    if moved.any():
        pc = model.posterior(cf[moved])
        q = response.alpha * pc + (1 - response.alpha) * p0[moved]
        lc_neg, lc_pos = _losses(loss, classifier, cf[moved])
        r_q += float(np.sum(m[moved] * r[moved] * ((1 - q) * lc_neg + q * lc_pos)))
    return r_p, r_q


def exact_terms_discrete(model: DiscreteGridModel, classifier: Classifier, policy: RecoursePolicy, cf=None) -> dict:
    """Exact probabilities of the joint events in the risk decompositions (pre-recourse labels)."""
    X0, m, p0, f0, cf, r = _exact_parts(model, classifier, policy, cf)
    neg = f0 == NEGATIVE
    mn = m * neg
    return {
        "P(f=-1)": float(mn.sum()),
        "P(B=1,f=-1)": float(np.sum(mn * r)),
        "P(B=1,f=-1,Y=+1)": float(np.sum(mn * r * p0)),
        "P(B=1,f=-1,Y=-1)": float(np.sum(mn * r * (1 - p0))),
        "P(B=0,f=-1,Y=+1)": float(np.sum(mn * (1 - r) * p0)),
        "P(f=+1,Y=-1)": float(np.sum(m * (~neg) * (1 - p0))),
        "P(f=-1,Y=+1)": float(np.sum(mn * p0)),
    }
