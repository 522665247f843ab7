"""Surrogate utility built from a tau-discrepant logistic loss.

Scores are written for a linear model ``f(x) = x @ theta``; every gradient is
taken with respect to ``theta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateMetricError, InvalidInputError
from .metrics import DiscreteDistribution, MetricSpec

_LN2 = math.log(2.0)


def _expit(t):
    # sigmoid via tanh is overflow-free for any finite t
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(t, dtype=float)))


@dataclass(frozen=True)
class TauDiscrepantLoss:
    """phi(t) = log2(1 + e^-t) for t <= 0 and log2(1 + e^(-tau t)) for t > 0.

    The right derivative at zero is exactly ``tau`` times the left one.
    """

    tau: float

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise InvalidInputError(f"tau must lie in (0, 1), got {self.tau!r}")

    def __call__(self, t):
        return self.value(t)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        slope = np.where(t > 0, self.tau, 1.0)
        out = np.logaddexp(0.0, -slope * t) / _LN2
        return out if out.ndim else float(out)

    def derivative(self, t):
        """Branch derivative; at t == 0 the (steeper) left branch is used."""
        t = np.asarray(t, dtype=float)
        slope = np.where(t > 0, self.tau, 1.0)
        out = -slope * _expit(-slope * t) / _LN2
        return out if out.ndim else float(out)

    def right_derivative_at_zero(self) -> float:
        return -self.tau / (2.0 * _LN2)

    def left_derivative_at_zero(self) -> float:
        return -1.0 / (2.0 * _LN2)


def loss_value(loss: TauDiscrepantLoss, t):
    return loss.value(t)


def loss_derivative(loss: TauDiscrepantLoss, t):
    return loss.derivative(t)


def score_w0(spec: MetricSpec, loss, xi, y):
    """Per-example surrogate numerator score."""
    xi = np.asarray(xi, dtype=float)
    pos = np.asarray(y) > 0
    out = np.where(
        pos,
        spec.a0_pos * (1.0 - loss.value(xi)) + spec.b0,
        spec.a0_neg * loss.value(-xi) + spec.b0,
    )
    return out if out.ndim else float(out)


def score_w1(spec: MetricSpec, loss, xi, y):
    """Per-example surrogate denominator score."""
    xi = np.asarray(xi, dtype=float)
    pos = np.asarray(y) > 0
    out = np.where(
        pos,
        spec.a1_pos * (1.0 + loss.value(xi)) + spec.b1,
        spec.a1_neg * loss.value(-xi) + spec.b1,
    )
    return out if out.ndim else float(out)


def dscore_w0(spec: MetricSpec, loss, xi, y):
    """d/dxi of ``score_w0``."""
    xi = np.asarray(xi, dtype=float)
    pos = np.asarray(y) > 0
    return np.where(pos, -spec.a0_pos * loss.derivative(xi), -spec.a0_neg * loss.derivative(-xi))


def dscore_w1(spec: MetricSpec, loss, xi, y):
    """d/dxi of ``score_w1``."""
    xi = np.asarray(xi, dtype=float)
    pos = np.asarray(y) > 0
    return np.where(pos, spec.a1_pos * loss.derivative(xi), -spec.a1_neg * loss.derivative(-xi))


def population_w0(spec: MetricSpec, loss, xi, q):
    """Surrogate numerator score at margin ``xi`` and posterior ``q``."""
    q = np.asarray(q, dtype=float)
    return spec.a0_pos * (1 - loss.value(xi)) * q + spec.a0_neg * loss.value(-np.asarray(xi)) * (1 - q) + spec.b0


def population_w1(spec: MetricSpec, loss, xi, q):
    q = np.asarray(q, dtype=float)
    return spec.a1_pos * (1 + loss.value(xi)) * q + spec.a1_neg * loss.value(-np.asarray(xi)) * (1 - q) + spec.b1


@dataclass(frozen=True)
class SplitSample:
    """Two disjoint halves of one labeled sample.

    The numerator of the empirical surrogate utility averages over ``s0``,
    the denominator over ``s1``.
    """

    x0: np.ndarray
    y0: np.ndarray
    x1: np.ndarray
    y1: np.ndarray

    def __post_init__(self):
        for name in ("x0", "x1"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        for name in ("y0", "y1"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).ravel())
        if self.y0.size == 0 or self.y1.size == 0:
            raise InvalidInputError("both halves of a split must be non-empty")
        if self.x0.shape[0] != self.y0.size or self.x1.shape[0] != self.y1.size:
            raise InvalidInputError("feature and label counts differ")
        if self.x0.shape[1] != self.x1.shape[1]:
            raise InvalidInputError("halves have different feature dimensions")

    @property
    def dim(self) -> int:
        return self.x0.shape[1]

    @property
    def n(self) -> int:
        return self.y0.size + self.y1.size

    @classmethod
    def from_arrays(cls, x, y, seed=None, m=None, shuffle=True) -> "SplitSample":
        """Shuffle once (seeded) and put the first ``m`` (default n // 2) rows in s0."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        n = y.size
        if n < 2:
            raise InvalidInputError("need at least two examples to split")
        m = n // 2 if m is None else m
        if not 0 < m < n:
            raise InvalidInputError(f"split size {m} out of range for n={n}")
        idx = np.random.default_rng(seed).permutation(n) if shuffle else np.arange(n)
        return cls(x[idx[:m]], y[idx[:m]], x[idx[m:]], y[idx[m:]])


def _theta(f):
    return np.asarray(getattr(f, "theta", f), dtype=float)


def surrogate_numerator(spec: MetricSpec, loss, f, x0, y0) -> float:
    xi = np.atleast_2d(x0) @ _theta(f)
    return float(np.mean(score_w0(spec, loss, xi, y0)))


def surrogate_denominator(spec: MetricSpec, loss, f, x1, y1) -> float:
    xi = np.atleast_2d(x1) @ _theta(f)
    return float(np.mean(score_w1(spec, loss, xi, y1)))


def numerator_gradient(spec: MetricSpec, loss, f, x0, y0):
    x0 = np.atleast_2d(x0)
    xi = x0 @ _theta(f)
    return dscore_w0(spec, loss, xi, y0) @ x0 / x0.shape[0]


def _moments(spec, loss, theta, split):
    xi0 = split.x0 @ theta
    xi1 = split.x1 @ theta
    num = float(np.mean(score_w0(spec, loss, xi0, split.y0)))
    den = float(np.mean(score_w1(spec, loss, xi1, split.y1)))
    gnum = dscore_w0(spec, loss, xi0, split.y0) @ split.x0 / split.y0.size
    gden = dscore_w1(spec, loss, xi1, split.y1) @ split.x1 / split.y1.size
    return num, den, gnum, gden


def surrogate_utility(spec: MetricSpec, loss, f, split: SplitSample) -> float:
    theta = _theta(f)
    num = surrogate_numerator(spec, loss, theta, split.x0, split.y0)
    den = surrogate_denominator(spec, loss, theta, split.x1, split.y1)
    if den == 0:
        raise DegenerateMetricError("surrogate denominator is zero")
    return num / den


def surrogate_gradient(spec: MetricSpec, loss, f, split: SplitSample):
    """Gradient of the empirical surrogate utility by the quotient rule."""
    num, den, gnum, gden = _moments(spec, loss, _theta(f), split)
    if den == 0:
        raise DegenerateMetricError("surrogate denominator is zero")
    return (den * gnum - num * gden) / den**2


def gradient_direction(spec: MetricSpec, loss, f, split: SplitSample):
    """Unbiased estimate of the surrogate-utility gradient direction.

    The pairwise average over (s0, s1) factorizes into a product of means, so
    this costs O(n d) rather than O(m (n - m) d).
    """
    num, den, gnum, gden = _moments(spec, loss, _theta(f), split)
    return den * gnum - num * gden


def population_moments(spec: MetricSpec, loss, f, dist: DiscreteDistribution):
    """Expected (W0, W1, grad W0, grad W1) of the per-example scores under ``dist``."""
    xi = dist.x @ _theta(f)
    eta, mass = dist.eta, dist.mass
    e_w0 = mass @ (eta * score_w0(spec, loss, xi, 1) + (1 - eta) * score_w0(spec, loss, xi, -1))
    e_w1 = mass @ (eta * score_w1(spec, loss, xi, 1) + (1 - eta) * score_w1(spec, loss, xi, -1))
    d0 = eta * dscore_w0(spec, loss, xi, 1) + (1 - eta) * dscore_w0(spec, loss, xi, -1)
    d1 = eta * dscore_w1(spec, loss, xi, 1) + (1 - eta) * dscore_w1(spec, loss, xi, -1)
    return float(e_w0), float(e_w1), (mass * d0) @ dist.x, (mass * d1) @ dist.x


def population_direction(spec: MetricSpec, loss, f, dist: DiscreteDistribution):
    """Exact expected gradient direction E[W1] E[grad W0] - E[W0] E[grad W1]."""
    e_w0, e_w1, g0, g1 = population_moments(spec, loss, f, dist)
    return e_w1 * g0 - e_w0 * g1


def population_surrogate_utility(spec: MetricSpec, loss, f, dist: DiscreteDistribution) -> float:
    e_w0, e_w1, _, _ = population_moments(spec, loss, f, dist)
    if e_w1 == 0:
        raise DegenerateMetricError("surrogate denominator is zero")
    return e_w0 / e_w1
