"""Counterfactual search, acceptance functions and the recourse mechanism.

A negatively classified point ``x0`` is moved to its counterfactual
``phi(x0)`` with probability ``r(x0)``; positively classified points never
move. Searchers operate on whole batches and return ``x0`` unchanged for
points already in the positive class.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .classifiers import Classifier, LinearClassifier, PlattCalibrated
from .core import (
    NEGATIVE,
    POSITIVE,
    ResponseModel,
    RngLike,
    RngSpec,
    as_labels,
    as_points,
    bernoulli_labels,
    make_rng,
    response_probability,
)


class InfeasibleRecourseError(RuntimeError):
    """No positively classified point was found within the search budget."""


# ---------------------------------------------------------------------------
# Costs and acceptance


@dataclass(frozen=True)
class CostFunction:
    """Euclidean or weighted-Euclidean cost ``sqrt(sum_i w_i (z_i - x_i)^2)``."""

    kind: str = "euclidean"
    weights: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("euclidean", "weighted-euclidean"):
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if self.kind == "weighted-euclidean":
            if self.weights is None or np.any(np.asarray(self.weights) <= 0):
                raise ValueError("weighted-euclidean cost needs positive weights")
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    def scale(self, d: int) -> np.ndarray:
        """Per-coordinate factors that turn the cost into a plain Euclidean norm."""
        if self.kind == "euclidean":
            return np.ones(d)
        w = np.asarray(self.weights, dtype=float)
        if len(w) != d:
            raise ValueError(f"cost has {len(w)} weights for {d} features")
        return np.sqrt(w)

    def __call__(self, x0, z) -> np.ndarray:
        x0, z = as_points(x0), as_points(z)
        return np.linalg.norm((z - x0) * self.scale(x0.shape[1]), axis=1)


EUCLIDEAN = CostFunction()


@dataclass(frozen=True)
class AcceptanceFunction:
    """Probability ``r(x0)`` that a negatively classified user implements recourse.

    Kinds: ``always``; ``threshold`` (``1{|x0 - phi(x0)| <= D}``, param D);
    ``gaussian-kernel`` (``exp(-|x0 - phi(x0)|^2 / (2 sigma2))``, param sigma2);
    ``constant`` (param p).
    """

    kind: str = "always"
    param: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("always", "threshold", "gaussian-kernel", "constant"):
            raise ValueError(f"unknown acceptance kind {self.kind!r}")
        if self.kind != "always":
            if self.param is None:
                raise ValueError(f"acceptance {self.kind!r} needs a parameter")
            if self.kind == "constant" and not 0.0 <= self.param <= 1.0:
                raise ValueError("constant acceptance probability must lie in [0, 1]")
            if self.kind in ("threshold", "gaussian-kernel") and self.param < 0:
                raise ValueError("acceptance parameter must be nonnegative")

    @property
    def deterministic(self) -> bool:
        return self.kind in ("always", "threshold") or (self.kind == "constant" and self.param in (0.0, 1.0))

    def label(self) -> str:
        return self.kind if self.kind == "always" else f"{self.kind}({self.param:g})"


def accept_prob(r: AcceptanceFunction, x0, cf) -> np.ndarray:
    x0, cf = as_points(x0), as_points(cf)
    dist = np.linalg.norm(cf - x0, axis=1)
    if r.kind == "always":
        return np.ones(len(x0))
    if r.kind == "threshold":
        return (dist <= r.param).astype(float)
    if r.kind == "constant":
        return np.full(len(x0), float(r.param))
    if r.param == 0.0:
        return (dist == 0).astype(float)
    return np.exp(-(dist**2) / (2.0 * r.param))


# ---------------------------------------------------------------------------
# Searchers


def linear_parts(classifier: Classifier):
    """``(theta, theta0)`` if the classifier's log-odds are affine, else None."""
    if isinstance(classifier, LinearClassifier):
        return classifier.theta, classifier.theta0
    if isinstance(classifier, PlattCalibrated):
        inner = linear_parts(classifier.base)
        if inner is not None:
            return classifier.a * inner[0], classifier.a * inner[1] + classifier.b
    return None


def _is_positive(classifier: Classifier, Z: np.ndarray) -> np.ndarray:
    return classifier.decision_function(Z) >= 0


def bisect_to_boundary(classifier: Classifier, x0: np.ndarray, z: np.ndarray, steps: int = 40) -> np.ndarray:
    """Move each positive ``z`` toward its negative ``x0`` while staying positive.

    Assumes ``f(x0) = -1`` and ``f(z) = +1``; returns the positive end of the
    final bracket on the segment.
    """
    lo = np.zeros(len(x0))
    hi = np.ones(len(x0))
    delta = z - x0
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        pos = _is_positive(classifier, x0 + mid[:, None] * delta)
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
    return np.where((hi == 1.0)[:, None], z, x0 + hi[:, None] * delta)


class Searcher:
    """Batch counterfactual search. Subclasses implement :meth:`_search_negatives`."""

    kind = "base"

    def __call__(self, classifier: Classifier, X0, cost: CostFunction = EUCLIDEAN, rng: RngLike = None) -> np.ndarray:
        X0 = as_points(X0)
        out = X0.copy()
        neg = ~_is_positive(classifier, X0)
        if neg.any():
            out[neg] = self._search_negatives(classifier, X0[neg], cost, rng)
        return out

    def _search_negatives(self, classifier, X0, cost, rng):
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind}


class HyperplaneProjection(Searcher):
    """Exact closest point on the hyperplane for classifiers with affine log-odds."""

    kind = "hyperplane-projection"

    def _search_negatives(self, classifier, X0, cost, rng):
        parts = linear_parts(classifier)
        if parts is None:
            raise ValueError("hyperplane projection requires a classifier with affine log-odds")
        theta, theta0 = parts
        if not np.any(theta):
            raise InfeasibleRecourseError("classifier has theta = 0 and is negative everywhere")
        s2 = cost.scale(X0.shape[1]) ** 2
        direction = theta / s2
        margin = X0 @ theta + theta0
        t = -margin / np.dot(theta, direction)
        Z = X0 + t[:, None] * direction
        # rounding may leave the projection a hair on the negative side
        bump = 0.0
        for _ in range(60):
            bad = ~_is_positive(classifier, Z)
            if not bad.any():
                return Z
            bump = max(2.0 * bump, 1e-15)
            Z[bad] = X0[bad] + (t[bad] * (1.0 + bump) + bump)[:, None] * direction
        raise InfeasibleRecourseError("projection failed to reach the positive side")


class GridSearch(Searcher):
    """Brute force over a dense axis-aligned grid, plus boundary crossings on grid edges.

    With ``candidates`` given, the search is exhaustive over those points only
    (ties go to the lowest index); otherwise a grid of ``resolution`` points per
    axis spans ``bounds`` or the data's bounding box inflated by ``inflate``.
    """

    kind = "grid-brute-force"

    def __init__(
        self,
        resolution: int = 400,
        bounds=None,
        inflate: float = 0.1,
        candidates=None,
        refine: bool = True,
        max_points: int = 5_000_000,
    ):
        self.resolution = int(resolution)
        self.bounds = None if bounds is None else np.asarray(bounds, dtype=float)
        self.inflate = float(inflate)
        self.candidates = None if candidates is None else as_points(candidates)
        self.refine = refine
        self.max_points = max_points
        self._cache = {}

    def describe(self):
        return {
            "kind": self.kind,
            "resolution": self.resolution,
            "bounds": None if self.bounds is None else self.bounds.tolist(),
            "inflate": self.inflate,
            "explicit_candidates": self.candidates is not None,
        }

    def __call__(self, classifier, X0, cost=EUCLIDEAN, rng=None):
        X0 = as_points(X0)
        self._box = self.grid_bounds(X0)
        return super().__call__(classifier, X0, cost, rng)

    def grid_bounds(self, X0: np.ndarray) -> np.ndarray:
        if self.bounds is not None:
            return self.bounds
        lo, hi = X0.min(axis=0), X0.max(axis=0)
        pad = self.inflate * np.maximum(hi - lo, 1e-12)
        return np.stack([lo - pad, hi + pad], axis=1)

    def positive_candidates(self, classifier: Classifier, bounds: np.ndarray) -> np.ndarray:
        key = (id(classifier), bounds.tobytes())
        hit = self._cache.get(key)
        if hit is not None and hit[0] is classifier:
            return hit[1]
        d = len(bounds)
        if self.resolution**d > self.max_points:
            raise ValueError(f"grid of {self.resolution}^{d} points exceeds the budget; lower the resolution")
        axes = [np.linspace(b[0], b[1], self.resolution) for b in bounds]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        flat = mesh.reshape(-1, d)
        pos = np.empty(len(flat), dtype=bool)
        for s in range(0, len(flat), 100_000):
            pos[s : s + 100_000] = _is_positive(classifier, flat[s : s + 100_000])
        pos_grid = pos.reshape(mesh.shape[:-1])
        cands = [flat[pos]]
        if self.refine:
            for ax in range(d):
                a = np.moveaxis(pos_grid, ax, 0)
                change = a[1:] != a[:-1]
                if not change.any():
                    continue
                idx = np.argwhere(change)
                lo_idx = idx.copy()
                lo_idx[:, 0] = idx[:, 0]
                hi_idx = idx.copy()
                hi_idx[:, 0] = idx[:, 0] + 1
                # restore original axis order
                perm = list(range(1, ax + 1)) + [0] + list(range(ax + 1, d))
                lo_pts = mesh[tuple(lo_idx[:, perm].T)]
                hi_pts = mesh[tuple(hi_idx[:, perm].T)]
                lo_pos = _is_positive(classifier, lo_pts)
                neg_end = np.where(lo_pos[:, None], hi_pts, lo_pts)
                pos_end = np.where(lo_pos[:, None], lo_pts, hi_pts)
                cands.append(bisect_to_boundary(classifier, neg_end, pos_end, steps=45))
        out = np.concatenate(cands, axis=0)
        self._cache = {key: (classifier, out)}
        return out

    def _search_negatives(self, classifier, X0, cost, rng):
        scale = cost.scale(X0.shape[1])
        if self.candidates is not None:
            cands = self.candidates[_is_positive(classifier, self.candidates)]
            if len(cands) == 0:
                raise InfeasibleRecourseError("no candidate point is classified positive")
            dist = np.linalg.norm((X0[:, None, :] - cands[None, :, :]) * scale, axis=2)
            return cands[np.argmin(dist, axis=1)].copy()
        cands = self.positive_candidates(classifier, self._box)
        if len(cands) == 0:
            raise InfeasibleRecourseError("classifier is negative on the whole search grid")
        _, j = cKDTree(cands * scale).query(X0 * scale)
        Z = cands[j]
        if self.refine:
            Z = bisect_to_boundary(classifier, X0, Z, steps=45)
        return Z


def _sample_annulus(rng, n: int, d: int, inner: float, outer: float) -> np.ndarray:
    v = rng.standard_normal((n, d))
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    u = rng.random(n)
    radius = (inner**d + u * (outer**d - inner**d)) ** (1.0 / d)
    return v * radius[:, None]


class GrowingSpheres(Searcher):
    """Expanding-annulus random search, then line refinement toward ``x0``.

    After the first annulus containing a positive sample, ``polish_rounds``
    rounds sample directions on the sphere of the current best radius and
    keep any shorter boundary crossing.
    """

    kind = "growing-spheres"

    def __init__(
        self,
        r0: float = 0.05,
        growth: float = 1.2,
        n_samples: int = 200,
        max_annuli: int = 50,
        polish_rounds: int = 10,
        clip=None,
        seed: int = 0,
    ):
        self.r0, self.growth = float(r0), float(growth)
        self.n_samples, self.max_annuli = int(n_samples), int(max_annuli)
        self.polish_rounds = int(polish_rounds)
        self.clip = None if clip is None else np.asarray(clip, dtype=float)
        self.seed = seed

    def describe(self):
        return {
            "kind": self.kind,
            "r0": self.r0,
            "growth": self.growth,
            "n_samples": self.n_samples,
            "max_annuli": self.max_annuli,
            "polish_rounds": self.polish_rounds,
        }

    def _clip(self, Z):
        if self.clip is None:
            return Z
        return np.clip(Z, self.clip[:, 0], self.clip[:, 1])

    def _search_negatives(self, classifier, X0, cost, rng):
        gen = make_rng(rng if rng is not None else RngSpec(self.seed).substream("growing-spheres"))
        n, d = X0.shape
        scale = cost.scale(d)
        m = self.n_samples
        best = np.full((n, d), np.nan)
        found = np.zeros(n, dtype=bool)
        inner, outer = 0.0, self.r0
        for _ in range(self.max_annuli):
            active = np.nonzero(~found)[0]
            if len(active) == 0:
                break
            offs = _sample_annulus(gen, len(active) * m, d, inner, outer).reshape(len(active), m, d)
            Z = self._clip(X0[active, None, :] + offs / scale)
            pos = _is_positive(classifier, Z.reshape(-1, d)).reshape(len(active), m)
            dist = np.where(pos, np.linalg.norm((Z - X0[active, None, :]) * scale, axis=2), np.inf)
            k = np.argmin(dist, axis=1)
            hit = pos.any(axis=1)
            best[active[hit]] = Z[hit, k[hit]]
            found[active[hit]] = True
            inner, outer = outer, outer * self.growth
        if not found.all():
            raise InfeasibleRecourseError(f"{int((~found).sum())} points found no positive sample within {self.max_annuli} annuli")
        best = bisect_to_boundary(classifier, X0, best, steps=30)
        for _ in range(self.polish_rounds):
            radius = np.linalg.norm((best - X0) * scale, axis=1)
            dirs = gen.standard_normal((n, m, d))
            dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
            Z = self._clip(X0[:, None, :] + radius[:, None, None] * dirs / scale)
            pos = _is_positive(classifier, Z.reshape(-1, d)).reshape(n, m)
            rows, cols = np.nonzero(pos)
            if len(rows) == 0:
                break
            cand = bisect_to_boundary(classifier, X0[rows], Z[rows, cols], steps=30)
            cdist = np.linalg.norm((cand - X0[rows]) * scale, axis=1)
            order = np.lexsort((cdist, rows))
            first = np.ones(len(order), dtype=bool)
            first[1:] = rows[order][1:] != rows[order][:-1]
            sel = order[first]
            better = cdist[sel] < radius[rows[sel]]
            best[rows[sel][better]] = cand[sel][better]
        return best


class PenaltyGradient(Searcher):
    """Minimise ``-log g(z) + lam * c(x0, z)``, halving ``lam`` until ``f(z) = +1``.

    Gradients of the log-odds are taken by central differences; optimisation
    uses Adam steps warm-started across ``lam`` values.
    """

    kind = "penalty-gradient"

    def __init__(
        self,
        lam0: float = 1.0,
        max_halvings: int = 30,
        steps: int = 300,
        lr: float = 0.02,
        bisection_steps: int = 20,
        fd_step: float = 1e-5,
    ):
        self.lam0, self.max_halvings = float(lam0), int(max_halvings)
        self.steps, self.lr = int(steps), float(lr)
        self.bisection_steps, self.fd_step = int(bisection_steps), float(fd_step)

    def describe(self):
        return {
            "kind": self.kind,
            "lam0": self.lam0,
            "max_halvings": self.max_halvings,
            "steps": self.steps,
            "lr": self.lr,
            "bisection_steps": self.bisection_steps,
        }

    def _grad_log_g(self, classifier, Z):
        n, d = Z.shape
        h = self.fd_step
        probes = np.concatenate([Z + h * e for e in np.eye(d)] + [Z - h * e for e in np.eye(d)], axis=0)
        s = classifier.decision_function(probes).reshape(2, d, n)
        grad_s = (s[0] - s[1]).T / (2 * h)
        g = classifier.predict_proba(Z)
        # d/dz log sigmoid(s) = (1 - g) ds/dz
        return (1.0 - g)[:, None] * grad_s

    def _search_negatives(self, classifier, X0, cost, rng):
        if not classifier.differentiable:
            raise ValueError(f"penalty-gradient search needs a differentiable classifier, got {classifier.family}")
        n, d = X0.shape
        w = cost.scale(d) ** 2
        Z = X0.copy()
        done = np.zeros(n, dtype=bool)
        result = np.full_like(X0, np.nan)
        lam = self.lam0
        m = np.zeros_like(Z)
        v = np.zeros_like(Z)
        for _ in range(self.max_halvings + 1):
            act = ~done
            for t in range(1, self.steps + 1):
                za = Z[act]
                diff = za - X0[act]
                norm = np.sqrt(np.sum(w * diff**2, axis=1))
                gcost = np.where(norm[:, None] > 0, w * diff / np.maximum(norm, 1e-300)[:, None], 0.0)
                grad = -self._grad_log_g(classifier, za) + lam * gcost
                m[act] = 0.9 * m[act] + 0.1 * grad
                v[act] = 0.999 * v[act] + 0.001 * grad**2
                Z[act] = za - self.lr * (m[act] / (1 - 0.9**t)) / (np.sqrt(v[act] / (1 - 0.999**t)) + 1e-8)
            pos = _is_positive(classifier, Z) & ~done
            result[pos] = Z[pos]
            done |= pos
            if done.all():
                break
            lam *= 0.5
        if not done.all():
            raise InfeasibleRecourseError(f"{int((~done).sum())} points never crossed the boundary")
        return bisect_to_boundary(classifier, X0, result, steps=self.bisection_steps)


SEARCHERS = {
    "hyperplane-projection": HyperplaneProjection,
    "grid-brute-force": GridSearch,
    "growing-spheres": GrowingSpheres,
    "penalty-gradient": PenaltyGradient,
}


def make_searcher(kind: str, **params) -> Searcher:
    if kind not in SEARCHERS:
        raise ValueError(f"unknown searcher {kind!r}; expected one of {sorted(SEARCHERS)}")
    return SEARCHERS[kind](**params)


def counterfactual(searcher: Searcher, classifier: Classifier, x0, cost: CostFunction = EUCLIDEAN, rng: RngLike = None) -> np.ndarray:
    """Counterfactual of a single point (or of each row of a batch)."""
    x0 = np.asarray(x0, dtype=float)
    out = searcher(classifier, x0, cost, rng)
    return out[0] if x0.ndim == 1 else out


# ---------------------------------------------------------------------------
# Recourse mechanism


@dataclass(frozen=True)
class RecoursePolicy:
    searcher: Searcher
    acceptance: AcceptanceFunction = AcceptanceFunction()
    cost: CostFunction = EUCLIDEAN

    def describe(self) -> dict:
        return {
            "searcher": self.searcher.describe(),
            "acceptance": {"kind": self.acceptance.kind, "param": self.acceptance.param},
            "cost": {"kind": self.cost.kind, "weights": self.cost.weights},
        }


@dataclass
class RecourseBatch:
    """Paired pre/post-recourse arrays for a batch of users.

    ``f0`` is the prediction at ``x0``; ``b`` marks users who implemented
    recourse (only possible when ``f0 = -1``); ``y0`` and ``y`` are the labels
    before and after recourse.
    """

    x0: np.ndarray
    x: np.ndarray
    y0: np.ndarray
    y: np.ndarray
    b: np.ndarray
    f0: np.ndarray
    accept_prob: np.ndarray
    cf: np.ndarray

    def __len__(self):
        return len(self.y0)


def posterior_fn(model) -> Callable:
    """The posterior ``x -> P(Y=+1|x)`` of a generative model, oracle or callable."""
    if hasattr(model, "posterior"):
        return model.posterior
    if hasattr(model, "predict_proba"):
        return model.predict_proba
    if callable(model):
        return model
    raise TypeError("expected a model with a posterior, a classifier, or a callable")


def _uniforms(rng: RngLike, name: str, n: int) -> np.ndarray:
    if isinstance(rng, RngSpec):
        return rng.substream(name).generator().random(n)
    return make_rng(rng).random(n)


def apply_recourse(
    policy: RecoursePolicy,
    classifier: Classifier,
    model,
    response: ResponseModel,
    X0,
    y,
    rng: RngLike = None,
    cf: Optional[np.ndarray] = None,
) -> RecourseBatch:
    """Apply ``X = (1 - B) X0 + B phi(X0)`` and relabel moved users.

    With an :class:`RngSpec`, the acceptance and relabeling uniforms come from
    fixed substreams, so different classifiers and responses evaluated under
    the same spec share common random numbers. Precomputed counterfactuals
    may be passed as ``cf``.
    """
    X0, y = as_points(X0), as_labels(y)
    f0 = classifier.predict(X0)
    if cf is None:
        search_rng = rng.substream("search") if isinstance(rng, RngSpec) else rng
        cf = policy.searcher(classifier, X0, policy.cost, search_rng)
    else:
        cf = as_points(cf)
    neg = f0 == NEGATIVE
    r = np.where(neg, accept_prob(policy.acceptance, X0, cf), 0.0)
    b = neg & (_uniforms(rng, "acceptance", len(y)) < r)
    X = np.where(b[:, None], cf, X0)
    y_new = y.copy()
    u_label = _uniforms(rng, "response", len(y))
    if response.alpha > 0 and b.any():
        post = posterior_fn(model)
        p_x = np.asarray(post(X[b]), dtype=float)
        p_x0 = np.asarray(post(X0[b]), dtype=float) if response.alpha < 1 else p_x
        y_new[b] = bernoulli_labels(response_probability(response, p_x0, p_x), u_label[b])
    return RecourseBatch(X0, X, y, y_new, b, f0, r, cf)
