"""Recourse-invariant classifier families and strategic compensation.

Members of both families are threshold rules on a score: ``f(x) = +1`` iff
``s(x) >= t``. For linear members ``s(x) = x.theta / |theta|`` and
``t = -theta0 / |theta|``; for spherical members ``s(x) = |x - center|`` and
``t = b``. Recourse of width ``D`` moves a negatively classified point to
the nearest point of the positive set whenever its distance to the boundary,
``t - s(x)``, is at most ``D``. The rule with recourse is therefore the
threshold rule at ``t - D``, and the compensated member uses ``t + D``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .classifiers import LinearClassifier
from .core import DEFIANT, NEGATIVE, POSITIVE, RngSpec, as_labels, as_points
from .gen_models import DiscreteGridModel
from .recourse import AcceptanceFunction, HyperplaneProjection, RecoursePolicy, apply_recourse, posterior_fn
from .risk import SIGMA_FLOOR, TheoremCheck, Z_BAND


@dataclass(frozen=True)
class InvariantFamily:
    kind: str
    width: float

    def __post_init__(self):
        if self.kind not in ("linear", "spherical"):
            raise ValueError(f"unknown family {self.kind!r}; expected 'linear' or 'spherical'")
        if self.width < 0:
            raise ValueError("recourse width must be nonnegative")


@dataclass(frozen=True)
class LinearMember:
    theta: tuple
    theta0: float

    def __post_init__(self):
        object.__setattr__(self, "theta", tuple(float(v) for v in np.ravel(self.theta)))
        object.__setattr__(self, "theta0", float(self.theta0))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.theta))

    @property
    def unit(self) -> np.ndarray:
        n = self.norm
        if n == 0:
            raise ValueError("theta = 0 has no decision boundary")
        return np.asarray(self.theta) / n

    @property
    def threshold(self) -> float:
        return -self.theta0 / self.norm

    def score(self, X) -> np.ndarray:
        return as_points(X) @ self.unit

    def predict(self, X) -> np.ndarray:
        return np.where(self.score(X) >= self.threshold, POSITIVE, NEGATIVE)

    def with_threshold(self, t: float) -> "LinearMember":
        return LinearMember(self.theta, -t * self.norm)

    def to_dict(self):
        return {"kind": "linear", "theta": list(self.theta), "theta0": self.theta0}


@dataclass(frozen=True)
class SphericalMember:
    center: tuple
    b: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in np.ravel(self.center)))
        if self.b < 0:
            raise ValueError("spherical radius b must be nonnegative")
        object.__setattr__(self, "b", float(self.b))

    @property
    def threshold(self) -> float:
        return self.b

    def score(self, X) -> np.ndarray:
        return np.linalg.norm(as_points(X) - np.asarray(self.center), axis=1)

    def predict(self, X) -> np.ndarray:
        return np.where(self.score(X) >= self.b, POSITIVE, NEGATIVE)

    def with_threshold(self, t: float) -> "SphericalMember":
        return SphericalMember(self.center, max(t, 0.0))

    def to_dict(self):
        return {"kind": "spherical", "center": list(self.center), "b": self.b}


Member = Union[LinearMember, SphericalMember]


def _check_member(family: InvariantFamily, member: Member):
    expected = LinearMember if family.kind == "linear" else SphericalMember
    if not isinstance(member, expected):
        raise TypeError(f"{type(member).__name__} is not a member of the {family.kind} family")


def compensate(family: InvariantFamily, member: Member) -> Member:
    """The member whose rule with recourse equals ``member`` without recourse."""
    _check_member(family, member)
    if isinstance(member, LinearMember):
        if member.norm == 0:
            raise ValueError("theta = 0 has no decision boundary to compensate")
        return LinearMember(member.theta, member.theta0 - family.width * member.norm)
    return SphericalMember(member.center, member.b + family.width)


def recourse_map(member: Member, X, width: float):
    """``(phi(X), moved)``: points within ``width`` of the boundary on the negative side are moved onto it."""
    X = as_points(X)
    s = member.score(X)
    t = member.threshold
    moved = (s < t) & (t - s <= width)
    out = X.copy()
    if not moved.any():
        return out, moved
    Xm = X[moved]
    if isinstance(member, LinearMember):
        u = member.unit
        Z = Xm + (t - s[moved])[:, None] * u
        step = u
    else:
        c = np.asarray(member.center)
        diff = Xm - c
        r = np.linalg.norm(diff, axis=1)
        direction = np.where(r[:, None] > 0, diff / np.maximum(r, 1e-300)[:, None], np.eye(X.shape[1])[0])
        Z = c + t * direction
        step = direction
    bump = 0.0
    for _ in range(80):
        bad = member.score(Z) < t
        if not bad.any():
            break
        bump = max(2.0 * bump, 1e-15 * max(1.0, abs(t)))
        Z[bad] = Z[bad] + bump * (step[bad] if np.ndim(step) == 2 else step)
    out[moved] = Z
    return out, moved


# ---------------------------------------------------------------------------
# Populations and risks


@dataclass
class Population:
    """Points with labels and optional exact weights (weights sum to one)."""

    X: np.ndarray
    y: np.ndarray
    w: Optional[np.ndarray] = None

    @property
    def weights(self) -> np.ndarray:
        return np.full(len(self.y), 1.0 / len(self.y)) if self.w is None else self.w / self.w.sum()

    @property
    def exact(self) -> bool:
        return self.w is not None


def make_population(model, n: Optional[int] = None, rng=None) -> Population:
    if isinstance(model, DiscreteGridModel) and n is None:
        X, y, w = model.enumerate()
        return Population(X, y, w)
    if n is None:
        raise ValueError("a sample size is needed for a continuous model")
    X, y = model.sample(n, rng)
    return Population(X, as_labels(y))


def _wmean_se(values: np.ndarray, pop: Population):
    w = pop.weights
    mean = float(np.dot(w, values))
    if pop.exact or len(values) < 2:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / np.sqrt(len(values)))


def threshold_scan(scores: np.ndarray, y: np.ndarray, w: np.ndarray):
    """Exact minimiser over ``tau`` of the weighted 0/1 risk of ``1{s >= tau}``.

    Candidates are midpoints between consecutive distinct scores plus one
    value below and one above all scores; the first minimiser wins.
    """
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    neg_w = np.where(y[order] == NEGATIVE, w[order], 0.0)
    pos_w = np.where(y[order] == POSITIVE, w[order], 0.0)
    uniq, start = np.unique(s, return_index=True)
    # risk when the first k distinct values are classified negative
    cum_pos = np.concatenate([[0.0], np.cumsum(pos_w)])[np.append(start, len(s))]
    cum_neg = np.concatenate([[0.0], np.cumsum(neg_w)])[np.append(start, len(s))]
    risk = cum_pos + (neg_w.sum() - cum_neg)
    k = int(np.argmin(risk))
    if k == 0:
        tau = uniq[0] - 1.0
    elif k == len(uniq):
        tau = uniq[-1] + 1.0
    else:
        tau = 0.5 * (uniq[k - 1] + uniq[k])
    return float(tau), float(risk[k])


def member_risk_p(member: Member, pop: Population) -> np.ndarray:
    """Per-point 0/1 loss without recourse."""
    return (member.predict(pop.X) != pop.y).astype(float)


def member_risk_q(member: Member, pop: Population, width: float, case: str = "defiant", model=None, uniforms=None):
    """Per-point 0/1 loss after recourse by ``member`` itself.

    Defiant users keep their labels. Compliant users who move are scored by
    the expected loss ``1 - p(phi(x0))``, or by a label drawn with the given
    uniforms.
    """
    Z, moved = recourse_map(member, pop.X, width)
    pred = member.predict(Z)
    loss = (pred != pop.y).astype(float)
    if case == "compliant" and moved.any():
        p = np.asarray(posterior_fn(model)(Z[moved]), dtype=float)
        if uniforms is None:
            loss[moved] = np.where(pred[moved] == POSITIVE, 1.0 - p, p)
        else:
            y_new = np.where(uniforms[moved] < p, POSITIVE, NEGATIVE)
            loss[moved] = (pred[moved] != y_new).astype(float)
    return loss


# ---------------------------------------------------------------------------
# Family minimisation


def exhaustive_angles(X: np.ndarray) -> np.ndarray:
    """Directions between every pair of critical angles of a finite 2-D point set."""
    diff = (X[:, None, :] - X[None, :, :]).reshape(-1, 2)
    diff = diff[np.any(diff != 0, axis=1)]
    crit = np.arctan2(diff[:, 1], diff[:, 0]) + np.pi / 2
    crit = np.unique(np.mod(np.concatenate([crit, crit + np.pi]), 2 * np.pi))
    if len(crit) == 0:
        return np.array([0.0])
    nxt = np.append(crit[1:], crit[0] + 2 * np.pi)
    return 0.5 * (crit + nxt)


def _directions(angles):
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


@dataclass
class FamilyMinimum:
    member: Member
    risk: float
    objective: str
    n_candidates: int


def minimize_family(
    family: InvariantFamily,
    pop: Population,
    objective: str = "P",
    angles: Optional[np.ndarray] = None,
    centers: Optional[np.ndarray] = None,
    refine_levels: int = 2,
) -> FamilyMinimum:
    """Minimise ``R_P`` (objective ``"P"``) or the defiant ``R_Q`` (``"Q-defiant"``) over the family.

    For each direction (linear) or center (spherical) the threshold is
    optimised exactly. Linear directions default to 360 angles refined
    coarse-to-fine around the best, or to the exhaustive critical-angle set
    for exact populations.
    """
    if objective not in ("P", "Q-defiant"):
        raise ValueError("objective must be 'P' or 'Q-defiant'")
    shift = family.width if objective == "Q-defiant" else 0.0
    X, y, w = pop.X, pop.y, pop.weights
    best = None
    count = 0
    if family.kind == "linear":
        if X.shape[1] != 2:
            raise ValueError("linear family search is implemented for 2-D data")
        levels = [angles] if angles is not None else None
        if levels is None:
            if pop.exact:
                levels = [exhaustive_angles(X)]
            else:
                levels = [np.arange(360) * (2 * np.pi / 360)]
        grid_step = 2 * np.pi / 360
        for level in range(1 + (0 if (angles is not None or pop.exact) else refine_levels)):
            cand = levels[0] if level == 0 else best[2] + np.linspace(-grid_step, grid_step, 41)
            if level > 0:
                grid_step /= 20
            S = X @ _directions(cand).T
            for j in range(len(cand)):
                tau, risk = threshold_scan(S[:, j], y, w)
                count += 1
                if best is None or risk < best[0]:
                    best = (risk, tau, float(cand[j]))
        risk, tau, ang = best
        member = LinearMember(_directions(np.array([ang]))[0], -(tau + shift))
    else:
        if centers is None:
            lo, hi = X.min(axis=0), X.max(axis=0)
            axes = [np.linspace(a, b, 21) for a, b in zip(lo, hi)]
            centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, X.shape[1])
        for c in as_points(centers):
            tau, risk = threshold_scan(np.linalg.norm(X - c, axis=1), y, w)
            count += 1
            if best is None or risk < best[0]:
                best = (risk, max(tau, 0.0), c)
        risk, tau, c = best
        member = SphericalMember(c, tau + shift)
    return FamilyMinimum(member, float(risk), objective, count)


# ---------------------------------------------------------------------------
# Checks


def _pop_for(model, n, rng, population):
    if population is not None:
        return population
    if isinstance(model, DiscreteGridModel) and n is None:
        return make_population(model)
    return make_population(model, n, rng.substream("data") if isinstance(rng, RngSpec) else rng)


def verify_defiant_equality(
    family: InvariantFamily,
    model=None,
    n: Optional[int] = None,
    rng=None,
    population: Optional[Population] = None,
    **search,
) -> TheoremCheck:
    """``min_f R_Q_f(f) = min_f R_P(f)`` in the defiant case with deterministic acceptance.

    The defiant minimiser is re-evaluated by simulating recourse, which
    confirms the threshold-scan value.
    """
    pop = _pop_for(model, n, rng, population)
    min_p = minimize_family(family, pop, "P", **search)
    min_q = minimize_family(family, pop, "Q-defiant", **search)
    lq = member_risk_q(min_q.member, pop, family.width, "defiant")
    lp = member_risk_p(min_p.member, pop)
    simulated_q, _ = _wmean_se(lq, pop)
    diff_mean, sigma = _wmean_se(lq - lp, pop)
    details = {
        "argmin_p": min_p.member.to_dict(),
        "argmin_q": min_q.member.to_dict(),
        "scan_min_q": min_q.risk,
        "simulated_min_q": simulated_q,
        "compensated_argmin_p": compensate(family, min_p.member).to_dict(),
        "sigma": sigma,
        "exact": pop.exact,
    }
    if isinstance(min_q.member, LinearMember) and not pop.exact:
        # independent check through the general recourse mechanism
        m = min_q.member
        clf = LinearClassifier(m.unit, -m.threshold)
        policy = RecoursePolicy(HyperplaneProjection(), AcceptanceFunction("threshold", family.width))
        batch = apply_recourse(policy, clf, lambda Z: np.full(len(Z), 0.5), DEFIANT, pop.X, pop.y, RngSpec(0))
        details["mechanism_min_q"] = float(np.mean(clf.predict(batch.x) != batch.y))
    tol = 1e-12 if pop.exact else Z_BAND * max(sigma, SIGMA_FLOOR)
    ok = abs(min_q.risk - min_p.risk) <= tol and abs(simulated_q - min_q.risk) <= 1e-9
    return TheoremCheck(
        "strategic-defiant",
        min_q.risk,
        rhs=min_p.risk,
        tolerance=tol,
        verdict="holds" if ok else "fails",
        details=details,
    )


@dataclass
class DeltaReport:
    delta: float
    stderr: float
    band_description: str
    band_mass: float
    reference: dict
    compensated: dict
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "delta": self.delta,
            "stderr": self.stderr,
            "band_description": self.band_description,
            "band_mass": self.band_mass,
            "reference": self.reference,
            "compensated": self.compensated,
            "details": self.details,
        }


def _band_text(member: Member, width: float) -> str:
    if isinstance(member, LinearMember):
        return f"0 <= x.theta + theta0 < {width * member.norm:.6g} with theta={list(member.theta)}, theta0={member.theta0:.6g}"
    return f"{member.b:.6g} <= |x - c| < {member.b + width:.6g} with c={list(member.center)}"


def delta_terms(family: InvariantFamily, reference: Member, pop: Population, model):
    """Per-point integrand ``1{x in A} (p(phi'(x)) - p(x))`` and the compensated member."""
    comp = compensate(family, reference)
    Z, band = recourse_map(comp, pop.X, family.width)
    vals = np.zeros(len(pop.y))
    if band.any():
        post = posterior_fn(model)
        vals[band] = np.asarray(post(Z[band]), dtype=float) - np.asarray(post(pop.X[band]), dtype=float)
    return vals, band, comp, Z


def estimate_delta(
    family: InvariantFamily,
    model,
    n: Optional[int] = None,
    rng=None,
    population: Optional[Population] = None,
    reference: Optional[Member] = None,
    **search,
) -> DeltaReport:
    """Risk change of the fixed ``R_P`` minimiser when data follow recourse for its compensation.

    Uses the posterior form ``E[1{X0 in A} (P(Y=-1|X0) - P(Y=-1|phi'(X0)))]``
    over the band ``A`` of users moved by the compensated member.
    """
    pop = _pop_for(model, n, rng, population)
    if reference is None:
        reference = minimize_family(family, pop, "P", **search).member
    vals, band, comp, _ = delta_terms(family, reference, pop, model)
    delta, se = _wmean_se(vals, pop)
    mass, _ = _wmean_se(band.astype(float), pop)
    return DeltaReport(
        delta,
        se,
        _band_text(reference, family.width),
        mass,
        reference.to_dict(),
        comp.to_dict(),
        {"n": len(pop.y), "exact": pop.exact, "reference_choice": "first minimiser found"},
    )


def verify_compliant_bound(
    family: InvariantFamily,
    model,
    n: Optional[int] = None,
    rng=None,
    population: Optional[Population] = None,
    coarse_angles: int = 36,
    coarse_thresholds: int = 21,
    **search,
) -> TheoremCheck:
    """``min_f R_Q_f(f) <= R_Q_f'(f') = min_f R_P(f) - Delta`` in the compliant case.

    (i) compares the simulated ``R_Q_f'(f')`` (labels redrawn with shared
    uniforms) with ``min R_P - Delta`` through the paired per-point
    difference; (ii) evaluates the compliant risk on a coarse family grid
    that contains ``f'`` and checks that its minimum does not exceed
    ``R_Q_f'(f')`` by more than 3 sigma.
    """
    pop = _pop_for(model, n, rng, population)
    min_p = minimize_family(family, pop, "P", **search)
    ref = min_p.member
    vals, band, comp, _ = delta_terms(family, ref, pop, model)
    lp = member_risk_p(ref, pop)
    if pop.exact:
        uniforms = None
    else:
        spec = rng if isinstance(rng, RngSpec) else RngSpec(0)
        uniforms = spec.substream("response").generator().random(len(pop.y))
    lq = member_risk_q(comp, pop, family.width, "compliant", model, uniforms)
    r_q_comp, _ = _wmean_se(lq, pop)
    delta, delta_se = _wmean_se(vals, pop)
    r_p_min, _ = _wmean_se(lp, pop)
    gap, sigma = _wmean_se(lq - (lp - vals), pop)
    tol = 1e-12 if pop.exact else Z_BAND * max(sigma, SIGMA_FLOOR)
    eq_ok = abs(gap) <= tol
    # (ii) coarse search of the compliant objective, always including f'
    coarse = [(comp, r_q_comp)]
    if family.kind == "linear":
        base_angle = float(np.arctan2(ref.unit[1], ref.unit[0]))
        for a in base_angle + np.linspace(-np.pi, np.pi, coarse_angles, endpoint=False):
            u = np.array([np.cos(a), np.sin(a)])
            s = pop.X @ u
            for t in np.quantile(s, np.linspace(0.02, 0.98, coarse_thresholds)):
                m = LinearMember(u, -t)
                coarse.append((m, _wmean_se(member_risk_q(m, pop, family.width, "compliant", model), pop)[0]))
    else:
        for t in np.linspace(0.0, 2.0 * comp.b + 1.0, coarse_thresholds):
            m = SphericalMember(comp.center, t)
            coarse.append((m, _wmean_se(member_risk_q(m, pop, family.width, "compliant", model), pop)[0]))
    best_member, best_q = min(coarse, key=lambda kv: kv[1])
    ineq_ok = best_q <= r_q_comp + tol
    return TheoremCheck(
        "strategic-compliant",
        r_q_comp,
        rhs=r_p_min - delta,
        condition_holds=bool(delta > Z_BAND * max(delta_se, SIGMA_FLOOR)) if not pop.exact else bool(delta > 0),
        tolerance=tol,
        verdict="holds" if (eq_ok and ineq_ok) else "fails",
        details={
            "min_r_p": r_p_min,
            "delta": delta,
            "delta_stderr": delta_se,
            "sigma": sigma,
            "equality_holds": bool(eq_ok),
            "coarse_min_r_q": best_q,
            "coarse_argmin": best_member.to_dict(),
            "inequality_holds": bool(ineq_ok),
            "reference": ref.to_dict(),
            "compensated": comp.to_dict(),
        },
    )
