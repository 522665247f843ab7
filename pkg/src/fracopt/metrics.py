"""Linear-fractional performance metrics over binary confusion matrices.

A metric in this family is the ratio

    U = (a0_pos * TP + a0_neg * FP + b0) / (a1_pos * TP + a1_neg * FP + b1)

where the offsets ``b0``/``b1`` may depend on the positive-class prior ``pi``.
``MetricSpec`` holds the resolved coefficients; ``Metric`` is the unresolved
family member (kind plus its trade-off parameter) that can be resolved for any
prior.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import CapacityError, DegenerateMetricError, InvalidInputError

_SUM_TOL = 1e-12
MAX_ORACLE_SUPPORT = 24


class MetricKind(str, enum.Enum):
    FBETA = "fbeta"
    JACCARD = "jaccard"
    GOWER_LEGENDRE = "gower-legendre"
    ACCURACY = "accuracy"
    CUSTOM = "custom"


@dataclass(frozen=True)
class ConfusionMatrix:
    """Joint probabilities of (label, predicted sign); entries sum to one."""

    tp: float
    fn_: float
    fp: float
    tn: float

    def __post_init__(self):
        entries = (self.tp, self.fn_, self.fp, self.tn)
        if not all(np.isfinite(entries)):
            raise InvalidInputError("confusion matrix entries must be finite")
        if min(entries) < 0:
            raise InvalidInputError(f"negative confusion matrix entry in {entries}")
        if abs(sum(entries) - 1.0) > _SUM_TOL:
            raise InvalidInputError(f"confusion matrix sums to {sum(entries)!r}, not 1")

    @property
    def pi(self) -> float:
        return self.tp + self.fn_

    @classmethod
    def from_rates(cls, tp: float, fp: float, pi: float) -> "ConfusionMatrix":
        # clamp tiny negative round-off from the subtractions
        return cls(tp, max(pi - tp, 0.0), fp, max(1.0 - pi - fp, 0.0))


@dataclass(frozen=True)
class MetricSpec:
    a0_pos: float
    a0_neg: float
    b0: float
    a1_pos: float
    a1_neg: float
    b1: float
    kind: MetricKind = MetricKind.CUSTOM
    pi: Optional[float] = None
    param: Optional[float] = None

    @property
    def delta_a0(self) -> float:
        return self.a0_pos - self.a0_neg

    @property
    def delta_a1(self) -> float:
        return self.a1_pos - self.a1_neg

    def satisfies_sign_constraints(self) -> bool:
        """a0_pos > 0, a0_neg <= 0, a1_pos >= 0 and a1_neg >= 0."""
        return self.a0_pos > 0 and self.a0_neg <= 0 and self.a1_pos >= 0 and self.a1_neg >= 0

    def numerator(self, tp, fp):
        return self.a0_pos * tp + self.a0_neg * fp + self.b0

    def denominator(self, tp, fp):
        return self.a1_pos * tp + self.a1_neg * fp + self.b1


def custom_spec(a0_pos, a0_neg, b0, a1_pos, a1_neg, b1, pi=None) -> MetricSpec:
    spec = MetricSpec(a0_pos, a0_neg, b0, a1_pos, a1_neg, b1, MetricKind.CUSTOM, pi)
    if not spec.satisfies_sign_constraints():
        raise InvalidInputError(
            "coefficients must satisfy a0_pos > 0, a0_neg <= 0, a1_pos >= 0, a1_neg >= 0"
        )
    return spec


def spec_for(kind, pi: float, param: Optional[float] = None) -> MetricSpec:
    """Coefficients of a preset metric resolved at class prior ``pi``.

    ``param`` is beta for F-beta (default 1) and alpha for Gower-Legendre
    (default 1, which is accuracy).
    """
    kind = MetricKind(kind)
    if not 0.0 < pi < 1.0:
        raise InvalidInputError(f"class prior must lie in (0, 1), got {pi!r}")
    if kind is MetricKind.FBETA:
        beta = 1.0 if param is None else float(param)
        if not beta > 0:
            raise InvalidInputError(f"beta must be positive, got {beta!r}")
        b2 = beta * beta
        return MetricSpec(1.0 + b2, 0.0, 0.0, 1.0, 1.0, b2 * pi, kind, pi, beta)
    if kind is MetricKind.JACCARD:
        return MetricSpec(1.0, 0.0, 0.0, 0.0, 1.0, pi, kind, pi)
    if kind is MetricKind.GOWER_LEGENDRE:
        alpha = 1.0 if param is None else float(param)
        if not alpha >= 0:
            raise InvalidInputError(f"alpha must be non-negative, got {alpha!r}")
        return MetricSpec(
            1.0, -1.0, 1.0 - pi, 1.0 - alpha, alpha - 1.0, 1.0 + (alpha - 1.0) * pi, kind, pi, alpha
        )
    if kind is MetricKind.ACCURACY:
        return MetricSpec(1.0, -1.0, 1.0 - pi, 0.0, 0.0, 1.0, kind, pi)
    raise InvalidInputError("custom metrics have no preset; use custom_spec")


@dataclass(frozen=True)
class Metric:
    """A preset metric family member whose offsets are resolved per prior."""

    kind: MetricKind
    param: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", MetricKind(self.kind))

    def spec(self, pi: float) -> MetricSpec:
        return spec_for(self.kind, pi, self.param)

    def __call__(self, cm: ConfusionMatrix) -> float:
        return metric_direct(self.kind, cm, self.param)

    @property
    def name(self) -> str:
        if self.kind is MetricKind.FBETA:
            beta = 1.0 if self.param is None else self.param
            return f"f{beta:g}"
        if self.kind is MetricKind.GOWER_LEGENDRE:
            return f"gower-legendre({1.0 if self.param is None else self.param:g})"
        return self.kind.value

    @classmethod
    def parse(cls, name: str, beta: Optional[float] = None, alpha: Optional[float] = None) -> "Metric":
        """Accepts 'f1', 'fbeta', 'jaccard', 'gower-legendre' (or 'gl'), 'accuracy'."""
        key = name.strip().lower()
        if key in ("f1", "fbeta", "f-beta", "f"):
            return cls(MetricKind.FBETA, beta if beta is not None else 1.0)
        if key.startswith("f") and key[1:].replace(".", "", 1).isdigit():
            return cls(MetricKind.FBETA, float(key[1:]))
        if key in ("jaccard", "jac", "iou"):
            return cls(MetricKind.JACCARD)
        if key in ("gower-legendre", "gl", "gowerlegendre"):
            return cls(MetricKind.GOWER_LEGENDRE, alpha if alpha is not None else 1.0)
        if key in ("accuracy", "acc"):
            return cls(MetricKind.ACCURACY)
        raise InvalidInputError(f"unknown metric {name!r}")


def confusion_from_sample(labels, scores) -> ConfusionMatrix:
    """Empirical confusion matrix; a score of exactly zero predicts -1."""
    y = np.asarray(labels, dtype=float).ravel()
    s = np.asarray(scores, dtype=float).ravel()
    if y.size == 0 or y.shape != s.shape:
        raise InvalidInputError(f"need equal-length non-empty inputs, got {y.size} and {s.size}")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise InvalidInputError("labels must be +1 or -1")
    n = y.size
    pos_label = y > 0
    pos_pred = s > 0
    tp = np.count_nonzero(pos_label & pos_pred) / n
    fn_ = np.count_nonzero(pos_label & ~pos_pred) / n
    fp = np.count_nonzero(~pos_label & pos_pred) / n
    tn = np.count_nonzero(~pos_label & ~pos_pred) / n
    return ConfusionMatrix(tp, fn_, fp, tn)


def true_utility(spec: MetricSpec, cm: ConfusionMatrix) -> float:
    den = spec.denominator(cm.tp, cm.fp)
    if den == 0:
        raise DegenerateMetricError("metric denominator is zero")
    return spec.numerator(cm.tp, cm.fp) / den


def metric_direct(kind, cm: ConfusionMatrix, param: Optional[float] = None) -> float:
    """Evaluate a preset metric from its textbook definition over (TP, FN, FP, TN).

    Kept independent of the coefficient form so the two can cross-check.
    """
    kind = MetricKind(kind)
    tp, fn_, fp, tn = cm.tp, cm.fn_, cm.fp, cm.tn
    if kind is MetricKind.FBETA:
        b2 = (1.0 if param is None else float(param)) ** 2
        num = (1.0 + b2) * tp
        den = (1.0 + b2) * tp + b2 * fn_ + fp
    elif kind is MetricKind.JACCARD:
        num = tp
        den = tp + fn_ + fp
    elif kind is MetricKind.GOWER_LEGENDRE:
        alpha = 1.0 if param is None else float(param)
        num = tp + tn
        den = tp + alpha * (fp + fn_) + tn
    elif kind is MetricKind.ACCURACY:
        num = tp + tn
        den = tp + fn_ + fp + tn
    else:
        raise InvalidInputError("custom metrics have no direct definition")
    if den == 0:
        raise DegenerateMetricError(f"{kind.value} denominator is zero")
    return num / den


def class_score(spec: MetricSpec, k: int, xi, q):
    """Population class-conditional score W_k(xi, q) with the 0/1 loss."""
    pred_pos = (np.asarray(xi) > 0).astype(float)
    q = np.asarray(q, dtype=float)
    if k == 0:
        return spec.a0_pos * pred_pos * q + spec.a0_neg * pred_pos * (1 - q) + spec.b0
    return spec.a1_pos * pred_pos * q + spec.a1_neg * pred_pos * (1 - q) + spec.b1


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite-support distribution over features with known posteriors.

    ``x`` has shape (k, d); ``eta`` and ``mass`` have shape (k,).
    """

    x: np.ndarray
    eta: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        eta = np.asarray(self.eta, dtype=float).ravel()
        mass = np.asarray(self.mass, dtype=float).ravel()
        if not (x.shape[0] == eta.size == mass.size) or eta.size == 0:
            raise InvalidInputError("x, eta and mass must describe the same non-empty support")
        if np.any(eta < 0) or np.any(eta > 1):
            raise InvalidInputError("posteriors must lie in [0, 1]")
        if np.any(mass < 0) or abs(mass.sum() - 1.0) > _SUM_TOL:
            raise InvalidInputError("masses must be non-negative and sum to 1")
        for name, arr in (("x", x), ("eta", eta), ("mass", mass)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_points(cls, points: Sequence) -> "DiscreteDistribution":
        """Build from an iterable of ``(x, eta, mass)`` triples."""
        xs, etas, masses = zip(*points)
        return cls(np.array([np.atleast_1d(v) for v in xs], dtype=float), etas, masses)

    @property
    def pi(self) -> float:
        return float(self.mass @ self.eta)

    @property
    def size(self) -> int:
        return self.eta.size

    def confusion(self, assignment) -> ConfusionMatrix:
        """Population confusion matrix of a per-point +1/-1 assignment."""
        pos = np.asarray(assignment) > 0
        tp = float(np.sum(self.mass[pos] * self.eta[pos]))
        fp = float(np.sum(self.mass[pos] * (1 - self.eta[pos])))
        return ConfusionMatrix.from_rates(tp, fp, self.pi)

    def confusion_of_scores(self, scores) -> ConfusionMatrix:
        return self.confusion(np.where(np.asarray(scores) > 0, 1, -1))


def bayes_condition(spec: MetricSpec, eta, utility: float):
    """Per-point value whose sign is the Bayes-optimal prediction at ``utility``."""
    eta = np.asarray(eta, dtype=float)
    return (spec.delta_a0 - spec.delta_a1 * utility) * eta - (spec.a1_neg * utility - spec.a0_neg)


def bayes_optimal_discrete(spec: MetricSpec, dist: DiscreteDistribution, *, critical_tol: float = 1e-12):
    """Exhaustive search for the utility-maximizing sign assignment.

    Returns ``(utility, assignment)``. Points on the critical set, where the
    optimality condition is exactly zero, are assigned -1; reassigning them
    never changes the utility.
    """
    k = dist.size
    if k > MAX_ORACLE_SUPPORT:
        raise CapacityError(f"support of size {k} exceeds the exhaustive limit {MAX_ORACLE_SUPPORT}")
    pos_mass = dist.mass * dist.eta
    neg_mass = dist.mass * (1 - dist.eta)
    bits = np.arange(k)

    best_u = -np.inf
    best_code = None
    chunk = 1 << 16
    total = 1 << k
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total), dtype=np.int64)
        mask = ((codes[:, None] >> bits) & 1).astype(float)
        tp = mask @ pos_mass
        fp = mask @ neg_mass
        num = spec.numerator(tp, fp)
        den = spec.denominator(tp, fp)
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.where(den != 0, num / np.where(den != 0, den, 1.0), -np.inf)
        i = int(np.argmax(u))
        if u[i] > best_u:
            best_u = float(u[i])
            best_code = int(codes[i])
    if best_code is None or not np.isfinite(best_u):
        raise DegenerateMetricError("metric denominator vanishes for every assignment")

    assignment = np.where((best_code >> bits) & 1, 1, -1)
    cond = bayes_condition(spec, dist.eta, best_u)
    critical = np.abs(cond) <= critical_tol
    assignment[critical] = -1
    off = ~critical & (dist.mass > 0)
    if np.any(assignment[off] * cond[off] <= 0):
        raise RuntimeError("exhaustive optimum violates the Bayes sign condition")
    return true_utility(spec, dist.confusion(assignment)), assignment
