"""Shared value types: labels, losses, label-response models and RNG streams.

Labels are encoded as ``+1`` / ``-1`` integers throughout the package and
batches of points are ``(n, d)`` float arrays.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

POSITIVE = 1
NEGATIVE = -1

# Cross-entropy predictions are clamped to [CLAMP, 1 - CLAMP] before the log.
CLAMP = 1e-12


def as_points(x) -> np.ndarray:
    """Return ``x`` as a finite 2-D float array of shape ``(n, d)``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"expected points of shape (n, d), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points must have finite coordinates")
    return arr


def as_labels(y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim == 0:
        y = y[None]
    if not np.all((y == POSITIVE) | (y == NEGATIVE)):
        raise ValueError("labels must be -1 or +1")
    return y.astype(np.int64)


def sign(z) -> np.ndarray:
    """Sign with ``sign(0) = +1``, so the positive set is closed."""
    return np.where(np.asarray(z) >= 0, POSITIVE, NEGATIVE).astype(np.int64)


# ---------------------------------------------------------------------------
# Random streams


@dataclass(frozen=True)
class RngSpec:
    """Seed plus stream id for a counter-based (Philox) random stream.

    An RngSpec is a plain value; every call to :meth:`generator` rebuilds the
    stream from scratch, so the same spec always yields the same draws.
    """

    seed: int
    stream_id: int = 0
    path: tuple = ()

    def generator(self) -> np.random.Generator:
        key = (int(self.stream_id),) + tuple(self.path)
        ss = np.random.SeedSequence(int(self.seed) % 2**64, spawn_key=key)
        return np.random.Generator(np.random.Philox(ss))

    def substream(self, name: Union[str, int]) -> "RngSpec":
        if isinstance(name, str):
            name = zlib.crc32(name.encode("utf-8"))
        return RngSpec(self.seed, self.stream_id, self.path + (int(name),))


RngLike = Union[RngSpec, np.random.Generator, int, None]


def make_rng(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngSpec):
        return rng.generator()
    return RngSpec(0 if rng is None else int(rng)).generator()


# ---------------------------------------------------------------------------
# Losses


@dataclass(frozen=True)
class LossFunction:
    """Loss ``l(prediction, y)``.

    ``kind`` is ``"zero-one"`` (predictions in {-1, +1}), ``"cross-entropy"``
    (predictions in [0, 1]) or ``"custom-symmetric"`` (predictions in [0, 1],
    user callable with ``l(1/2, -1) = l(1/2, +1) = boundary_value``).
    """

    kind: str
    boundary_value: Optional[float] = None
    fn: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("zero-one", "cross-entropy", "custom-symmetric"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "cross-entropy" and self.boundary_value is None:
            object.__setattr__(self, "boundary_value", float(np.log(2.0)))
        if self.kind == "custom-symmetric":
            if self.fn is None or self.boundary_value is None:
                raise ValueError("custom-symmetric loss needs fn and boundary_value")
            lo = float(self.fn(np.array([0.5]), np.array([NEGATIVE]))[0])
            hi = float(self.fn(np.array([0.5]), np.array([POSITIVE]))[0])
            if not (np.isclose(lo, self.boundary_value) and np.isclose(hi, self.boundary_value)):
                raise ValueError("custom loss is not symmetric at 1/2 with the given boundary value")

    @property
    def probabilistic(self) -> bool:
        return self.kind != "zero-one"


ZERO_ONE = LossFunction("zero-one")
CROSS_ENTROPY = LossFunction("cross-entropy")


def loss_eval(loss: LossFunction, prediction, y) -> np.ndarray:
    """Evaluate ``loss`` elementwise; scalars in, 0-d arrays out."""
    pred = np.asarray(prediction, dtype=float)
    y = np.asarray(y)
    if not np.all((y == POSITIVE) | (y == NEGATIVE)):
        raise ValueError("labels must be -1 or +1")
    if loss.kind == "zero-one":
        if not np.all((pred == POSITIVE) | (pred == NEGATIVE)):
            raise ValueError("zero-one loss expects predictions in {-1, +1}")
        return (pred != y).astype(float)
    if np.any(~np.isfinite(pred)) or np.any(pred < 0.0) or np.any(pred > 1.0):
        raise ValueError("probabilistic predictions must lie in [0, 1]")
    if loss.kind == "cross-entropy":
        p = np.clip(pred, CLAMP, 1.0 - CLAMP)
        return np.where(y == POSITIVE, -np.log(p), -np.log1p(-p))
    return np.asarray(loss.fn(pred, y), dtype=float)


# ---------------------------------------------------------------------------
# Label response after recourse


@dataclass(frozen=True)
class ResponseModel:
    """Mixture weight on the compliant response (1 = compliant, 0 = defiant)."""

    alpha: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")

    @property
    def name(self) -> str:
        if self.alpha == 1.0:
            return "compliant"
        if self.alpha == 0.0:
            return "defiant"
        return f"mixture({self.alpha:g})"

    @classmethod
    def from_name(cls, name: Union[str, float]) -> "ResponseModel":
        if isinstance(name, (int, float)):
            return cls(float(name))
        if name == "compliant":
            return cls(1.0)
        if name == "defiant":
            return cls(0.0)
        raise ValueError(f"unknown response {name!r}")


COMPLIANT = ResponseModel(1.0)
DEFIANT = ResponseModel(0.0)


def response_probability(model: ResponseModel, posterior_at_x0, posterior_at_x) -> np.ndarray:
    """P(Y=+1) after recourse: a convex mix of the two posteriors."""
    p0 = np.asarray(posterior_at_x0, dtype=float)
    p1 = np.asarray(posterior_at_x, dtype=float)
    if np.any((p0 < 0) | (p0 > 1) | (p1 < 0) | (p1 > 1)):
        raise ValueError("posteriors must lie in [0, 1]")
    return model.alpha * p1 + (1.0 - model.alpha) * p0


def bernoulli_labels(prob, uniforms) -> np.ndarray:
    """Labels ``+1`` where ``uniforms < prob``; shared uniforms couple draws."""
    return np.where(np.asarray(uniforms) < np.asarray(prob), POSITIVE, NEGATIVE).astype(np.int64)


def respond(model: ResponseModel, posterior_at_x0, posterior_at_x, rng: RngLike = None) -> np.ndarray:
    """Draw post-recourse labels with P(Y=+1) mixing the two posteriors."""
    prob = response_probability(model, posterior_at_x0, posterior_at_x)
    u = make_rng(rng).random(prob.shape)
    return bernoulli_labels(prob, u)
