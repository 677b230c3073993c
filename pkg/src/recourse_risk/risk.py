"""Risk estimators, exact risk decompositions and checks of the risk-change results.

All Monte Carlo checks are paired: ``R_P`` and ``R_Q`` come from the same
draws of ``X0``, ``Y`` and ``B``, and the standard error ``sigma`` of a
comparison is the per-sample standard error of the difference. A check
``holds`` when the measured discrepancy is within ``3 sigma``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .classifiers import Classifier
from .core import (
    NEGATIVE,
    POSITIVE,
    ZERO_ONE,
    LossFunction,
    ResponseModel,
    RngSpec,
    as_labels,
    as_points,
    loss_eval,
)
from .recourse import AcceptanceFunction, RecourseBatch, RecoursePolicy, accept_prob, apply_recourse, posterior_fn

Z_BAND = 3.0
SIGMA_FLOOR = 1e-12

TERM_KEYS = (
    "P(f=-1)",
    "P(B=1,f=-1)",
    "P(B=1,f=-1,Y=+1)",
    "P(B=1,f=-1,Y=-1)",
    "P(B=0,f=-1,Y=+1)",
    "P(f=+1,Y=-1)",
    "P(f=-1,Y=+1)",
)


def _mean(values: np.ndarray, weights=None) -> float:
    if weights is None:
        return float(np.mean(values))
    w = np.asarray(weights, dtype=float)
    return float(np.dot(w, values) / w.sum())


def _stderr(values: np.ndarray, weights=None) -> float:
    """Standard error of a sample mean; zero for exactly weighted populations."""
    if weights is not None or len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1) / np.sqrt(len(values)))


def pointwise_loss(classifier: Classifier, loss: LossFunction, X, y) -> np.ndarray:
    X, y = as_points(X), as_labels(y)
    pred = classifier.predict(X) if loss.kind == "zero-one" else classifier.predict_proba(X)
    return loss_eval(loss, pred, y)


def estimate_risk(classifier: Classifier, loss: LossFunction, X, y, weights=None):
    """Mean loss and its standard error (binomial for 0/1 loss)."""
    y = as_labels(y)
    if len(y) == 0:
        raise ValueError("cannot estimate a risk from an empty sample")
    vals = pointwise_loss(classifier, loss, X, y)
    r = _mean(vals, weights)
    if weights is not None:
        return r, 0.0
    if loss.kind == "zero-one":
        return r, float(np.sqrt(r * (1 - r) / len(y)))
    return r, _stderr(vals)


@dataclass
class RiskReport:
    r_p: float
    r_q: float
    stderr_p: float
    stderr_q: float
    stderr_diff: float
    n: int
    decomposition: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    @property
    def diff(self) -> float:
        return self.r_q - self.r_p

    def to_dict(self) -> dict:
        return asdict(self)


def decomposition_terms(f0, b, y, weights=None) -> dict:
    """Empirical frequencies of the joint events of prediction, acceptance and pre-recourse label."""
    f0, y = as_labels(f0), as_labels(y)
    b = np.asarray(b, dtype=bool)
    neg = f0 == NEGATIVE
    pos_y = y == POSITIVE
    events = {
        "P(f=-1)": neg,
        "P(B=1,f=-1)": b & neg,
        "P(B=1,f=-1,Y=+1)": b & neg & pos_y,
        "P(B=1,f=-1,Y=-1)": b & neg & ~pos_y,
        "P(B=0,f=-1,Y=+1)": ~b & neg & pos_y,
        "P(f=+1,Y=-1)": ~neg & ~pos_y,
        "P(f=-1,Y=+1)": neg & pos_y,
    }
    return {k: _mean(v.astype(float), weights) for k, v in events.items()}


def risk_report(classifier: Classifier, batch: RecourseBatch, loss: LossFunction = ZERO_ONE) -> RiskReport:
    lp = pointwise_loss(classifier, loss, batch.x0, batch.y0)
    lq = pointwise_loss(classifier, loss, batch.x, batch.y)
    n = len(batch)
    if loss.kind == "zero-one":
        rp, rq = float(lp.mean()), float(lq.mean())
        sp, sq = np.sqrt(rp * (1 - rp) / n), np.sqrt(rq * (1 - rq) / n)
    else:
        rp, rq, sp, sq = float(lp.mean()), float(lq.mean()), _stderr(lp), _stderr(lq)
    terms = decomposition_terms(batch.f0, batch.b, batch.y0)
    return RiskReport(rp, rq, float(sp), float(sq), _stderr(lq - lp), n, terms)


# ---------------------------------------------------------------------------
# Theorem checks


@dataclass
class TheoremCheck:
    """Outcome of one check: ``verdict`` is ``holds``, ``fails`` or ``inconclusive``."""

    theorem_id: str
    lhs: float
    rhs: Optional[float] = None
    lower: Optional[float] = None
    upper: Optional[float] = None
    condition_holds: Optional[bool] = None
    tolerance: float = 0.0
    verdict: str = "holds"
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _band(sigma: float) -> float:
    return Z_BAND * max(sigma, SIGMA_FLOOR)


def _case(case) -> str:
    if isinstance(case, ResponseModel):
        if case.alpha not in (0.0, 1.0):
            raise ValueError("this identity is stated for the compliant or the defiant case only")
        return case.name
    if case not in ("compliant", "defiant"):
        raise ValueError(f"case must be 'compliant' or 'defiant', got {case!r}")
    return case


def recourse_risk_rhs(case, terms: dict, r_p: float) -> float:
    """Right-hand side of the exact 0/1 risk identity after recourse.

    defiant:   P(B=1,f=-1,Y=-1) - P(B=1,f=-1,Y=+1) + R_P
    compliant: P(B=1,f=-1) / 2 - P(B=1,f=-1,Y=+1) + R_P

    The compliant form assumes counterfactuals land where the true posterior
    is 1/2 (exact for the Bayes classifier).
    """
    if _case(case) == "defiant":
        return terms["P(B=1,f=-1,Y=-1)"] - terms["P(B=1,f=-1,Y=+1)"] + r_p
    return 0.5 * terms["P(B=1,f=-1)"] - terms["P(B=1,f=-1,Y=+1)"] + r_p


def _indicators(batch: RecourseBatch):
    neg = batch.f0 == NEGATIVE
    moved = batch.b & neg
    y_pos = batch.y0 == POSITIVE
    return neg, moved, y_pos


def identity_check(case, classifier: Classifier, batch: RecourseBatch, model=None) -> TheoremCheck:
    """Compare the measured ``R_Q`` with :func:`recourse_risk_rhs` on a 0/1-loss batch.

    With ``model`` given, the compliant check first measures the mean gap
    ``|P(Y=+1|phi(x0)) - 1/2|`` over moved users; when it exceeds one standard
    error (e.g. counterfactuals on a discrete grid) the verdict is
    ``inconclusive`` with ``condition_holds=False``.
    """
    case = _case(case)
    lp = pointwise_loss(classifier, ZERO_ONE, batch.x0, batch.y0)
    lq = pointwise_loss(classifier, ZERO_ONE, batch.x, batch.y)
    _, moved, y_pos = _indicators(batch)
    moved, y_pos = moved.astype(float), y_pos.astype(float)
    if case == "defiant":
        rhs_i = moved * (1 - y_pos) - moved * y_pos + lp
    else:
        rhs_i = 0.5 * moved - moved * y_pos + lp
    terms = decomposition_terms(batch.f0, batch.b, batch.y0)
    lhs = float(lq.mean())
    rhs = recourse_risk_rhs(case, terms, float(lp.mean()))
    sigma = _stderr(lq - rhs_i)
    tol = _band(sigma)
    details = {"terms": terms, "r_p": float(lp.mean()), "sigma": sigma, "n": len(batch)}
    cond = bool(terms["P(B=1,f=-1)"] > 0)
    verdict = "holds" if abs(lhs - rhs) <= tol else "fails"
    if case == "compliant" and model is not None and moved.any():
        post = np.asarray(model.posterior(batch.x[moved.astype(bool)]), dtype=float)
        gap = float(np.abs(post - 0.5).sum() / len(batch))
        details["posterior_gap"] = gap
        if gap > max(sigma, SIGMA_FLOOR):
            cond, verdict = False, "inconclusive"
    return TheoremCheck(
        f"identity-{case}",
        lhs,
        rhs=rhs,
        condition_holds=cond,
        tolerance=tol,
        verdict=verdict,
        details=details,
    )


def moved_epsilon(batch: RecourseBatch, model) -> float:
    """Average of ``|1/2 - P(Y=+1 | phi(x0))|`` over the users who moved."""
    _, moved, _ = _indicators(batch)
    if not moved.any():
        return 0.0
    p = np.asarray(posterior_fn(model)(batch.cf[moved]), dtype=float)
    return float(np.mean(np.abs(0.5 - p)))


def classifier_risk_check(case, classifier: Classifier, batch: RecourseBatch, epsilon: Optional[float] = None, model=None) -> TheoremCheck:
    """Risk change of a thresholded probabilistic classifier under 0/1 loss.

    defiant: exact identity plus the condition ``P(Y=-1 | B=1, f=-1) >= 1/2``.
    compliant: ``R_Q`` lies in ``(1/2 -+ eps) P(B=1,f=-1) + P(f=+1,Y=-1) +
    P(B=0,f=-1,Y=+1)``; the risk increases if ``P(Y=-1 | B=1, f=-1) >= 1/2 + eps``.
    ``epsilon`` defaults to :func:`moved_epsilon` (needs ``model``).
    """
    case = _case(case)
    lp = pointwise_loss(classifier, ZERO_ONE, batch.x0, batch.y0)
    lq = pointwise_loss(classifier, ZERO_ONE, batch.x, batch.y)
    neg, moved, y_pos = _indicators(batch)
    terms = decomposition_terms(batch.f0, batch.b, batch.y0)
    r_p, r_q = float(lp.mean()), float(lq.mean())
    p_moved = terms["P(B=1,f=-1)"]
    cond_neg = terms["P(B=1,f=-1,Y=-1)"] / p_moved if p_moved > 0 else float("nan")
    details = {"terms": terms, "r_p": r_p, "P(Y=-1|B=1,f=-1)": cond_neg, "n": len(batch)}
    if case == "defiant":
        check = identity_check("defiant", classifier, batch)
        cond = bool(p_moved > 0 and cond_neg >= 0.5)
        details.update(check.details)
        details["increase"] = bool(r_q >= r_p)
        return TheoremCheck(
            "classifier-defiant",
            r_q,
            rhs=check.rhs,
            condition_holds=cond,
            tolerance=check.tolerance,
            verdict=check.verdict,
            details=details,
        )
    if epsilon is None:
        if model is None:
            raise ValueError("compliant check needs epsilon or a model to measure it")
        epsilon = moved_epsilon(batch, model)
    if not 0.0 <= epsilon <= 0.5:
        raise ValueError(f"epsilon = {epsilon} lies outside [0, 1/2]")
    base = terms["P(f=+1,Y=-1)"] + terms["P(B=0,f=-1,Y=+1)"]
    lower = (0.5 - epsilon) * p_moved + base
    upper = (0.5 + epsilon) * p_moved + base
    mid_i = 0.5 * moved + (~neg & ~y_pos) + (neg & ~batch.b & y_pos)
    sigma = _stderr(lq - mid_i)
    tol = _band(sigma)
    ok = lower - tol <= r_q <= upper + tol
    details.update({"epsilon": epsilon, "sigma": sigma, "increase": bool(r_q >= r_p)})
    return TheoremCheck(
        "classifier-compliant",
        r_q,
        lower=lower,
        upper=upper,
        condition_holds=bool(p_moved > 0 and cond_neg >= 0.5 + epsilon),
        tolerance=tol,
        verdict="holds" if ok else "fails",
        details=details,
    )


def surrogate_risk_check(classifier: Classifier, loss: LossFunction, batch: RecourseBatch) -> TheoremCheck:
    """Sign of ``R_Q(g) - R_P(g)`` versus ``E[l(g(X0), Y) | f=-1, B=1] <= c``.

    ``verdict`` is ``holds`` when the risk difference is resolved beyond 3 sigma
    and agrees with the condition, ``fails`` when it is resolved and disagrees,
    ``inconclusive`` otherwise.
    """
    if loss.boundary_value is None or not loss.probabilistic:
        raise ValueError("surrogate check needs a probabilistic loss with a boundary value")
    _, moved, _ = _indicators(batch)
    if not moved.any():
        raise ValueError("no user received and accepted recourse; the conditional loss is undefined")
    lp = pointwise_loss(classifier, loss, batch.x0, batch.y0)
    lq = pointwise_loss(classifier, loss, batch.x, batch.y)
    cond_loss = float(lp[moved].mean())
    c = float(loss.boundary_value)
    diff = float(lq.mean() - lp.mean())
    sigma = _stderr(lq - lp)
    tol = _band(sigma)
    condition = cond_loss <= c
    if abs(diff) <= tol:
        verdict = "inconclusive"
    else:
        verdict = "holds" if (diff > 0) == condition else "fails"
    return TheoremCheck(
        "surrogate-iff",
        diff,
        rhs=0.0,
        condition_holds=bool(condition),
        tolerance=tol,
        verdict=verdict,
        details={
            "conditional_loss": cond_loss,
            "c": c,
            "r_p": float(lp.mean()),
            "r_q": float(lq.mean()),
            "sigma": sigma,
            "boundary_gap": float(np.max(np.abs(classifier.predict_proba(batch.cf[moved]) - 0.5))),
        },
    )


def general_loss_rhs(case, classifier: Classifier, loss: LossFunction, model, X0, y, accept, cf, weights=None) -> float:
    """Expected risk after recourse for a loss on binary predictions with ``l(y, y) = 0``.

    defiant:   l(1,-1) E[r 1{Y=-1}] + E[(1-r) l(f(X0),Y)]
    compliant: l(1,-1) E[r p_-(phi(X0))] + E[(1-r) l(f(X0),Y)]

    ``accept`` is ``r(x0)`` with zero for positively classified points.
    """
    case = _case(case)
    X0, y = as_points(X0), as_labels(y)
    r = np.asarray(accept, dtype=float)
    if loss.kind == "zero-one":
        l_pos_neg = 1.0
    else:
        l_pos_neg = float(loss_eval(loss, 1.0, NEGATIVE))
    lp = pointwise_loss(classifier, loss, X0, y)
    if case == "defiant":
        first = r * (y == NEGATIVE)
    else:
        first = r * (1.0 - np.asarray(posterior_fn(model)(cf), dtype=float))
    return l_pos_neg * _mean(first, weights) + _mean((1 - r) * lp, weights)


def general_loss_check(case, classifier: Classifier, model, batch: RecourseBatch, loss: LossFunction = ZERO_ONE) -> TheoremCheck:
    case = _case(case)
    rhs = general_loss_rhs(case, classifier, loss, model, batch.x0, batch.y0, batch.accept_prob, batch.cf)
    lq = pointwise_loss(classifier, loss, batch.x, batch.y)
    lhs = float(lq.mean())
    sigma = _stderr(lq)
    tol = _band(sigma)
    return TheoremCheck(
        f"general-loss-{case}",
        lhs,
        rhs=rhs,
        tolerance=tol,
        verdict="holds" if abs(lhs - rhs) <= tol else "fails",
        details={"sigma": sigma},
    )


# ---------------------------------------------------------------------------
# Linear dependence on a constant acceptance probability


@dataclass
class LinearFit:
    p_grid: list
    risks: list
    intercept: float
    slope: float
    r_squared: float
    r_p: float
    r_q1: float
    intercept_gap_se: float
    slope_gap_se: float

    @property
    def intercept_ok(self) -> bool:
        return abs(self.intercept - self.r_p) <= _band(self.intercept_gap_se)

    @property
    def slope_ok(self) -> bool:
        return abs(self.slope - (self.r_q1 - self.r_p)) <= _band(self.slope_gap_se)

    def to_dict(self):
        return {**asdict(self), "intercept_ok": self.intercept_ok, "slope_ok": self.slope_ok}


def linear_in_p_fit(
    classifier: Classifier,
    model,
    policy: RecoursePolicy,
    p_grid: Sequence[float],
    n: int,
    rng: RngSpec,
    response: ResponseModel,
    data=None,
    loss: LossFunction = ZERO_ONE,
) -> LinearFit:
    """Least-squares line through ``(p, R_Q(p))`` for constant acceptance ``p``.

    All grid points share one sample and one set of uniforms, so the fitted
    intercept and slope can be compared with ``R_P`` and ``R_Q(1) - R_P``
    through per-sample paired standard errors.
    """
    p = np.asarray(sorted(set(float(v) for v in p_grid)))
    if len(p) < 3:
        raise ValueError("linear fit needs at least three distinct values of p")
    if p.min() < 0 or p.max() > 1:
        raise ValueError("p values must lie in [0, 1]")
    if data is None:
        X0, y = model.sample(n, rng.substream("data"))
    else:
        X0, y = data
    cf = policy.searcher(classifier, X0, policy.cost, rng.substream("search"))
    lp = pointwise_loss(classifier, loss, X0, y)
    per_p = []
    for pk in p:
        pol = RecoursePolicy(policy.searcher, AcceptanceFunction("constant", float(pk)), policy.cost)
        batch = apply_recourse(pol, classifier, model, response, X0, y, rng, cf=cf)
        per_p.append(pointwise_loss(classifier, loss, batch.x, batch.y))
    L = np.stack(per_p, axis=1)  # (n, k)
    A = np.stack([np.ones_like(p), p], axis=1)
    coef_map = np.linalg.pinv(A)  # rows: intercept, slope weights
    risks = L.mean(axis=0)
    intercept, slope = coef_map @ risks
    fitted = A @ np.array([intercept, slope])
    ss_res = float(np.sum((risks - fitted) ** 2))
    ss_tot = float(np.sum((risks - risks.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    # R_Q(1) evaluated on the same uniforms
    pol1 = RecoursePolicy(policy.searcher, AcceptanceFunction("constant", 1.0), policy.cost)
    l1 = pointwise_loss(classifier, loss, *_xy(apply_recourse(pol1, classifier, model, response, X0, y, rng, cf=cf)))
    icpt_i = L @ coef_map[0] - lp
    slope_i = L @ coef_map[1] - (l1 - lp)
    return LinearFit(
        p.tolist(),
        risks.tolist(),
        float(intercept),
        float(slope),
        float(r2),
        float(lp.mean()),
        float(l1.mean()),
        _stderr(icpt_i),
        _stderr(slope_i),
    )


def _xy(batch: RecourseBatch):
    return batch.x, batch.y
