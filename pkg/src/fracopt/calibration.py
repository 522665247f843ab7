"""Sufficient-condition checks for calibration of the surrogate utility.

The checks are advisory. Failing one does not mean the surrogate is
uncalibrated, only that the known sufficient conditions do not cover it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, NamedTuple, Optional

import numpy as np

from .exceptions import InvalidInputError
from .metrics import MetricKind, MetricSpec
from .surrogate import TauDiscrepantLoss


class Interval(NamedTuple):
    lo: float
    hi: float
    hi_closed: bool = False

    def __contains__(self, value) -> bool:
        if not value > self.lo:
            return False
        return value <= self.hi if self.hi_closed else value < self.hi

    def __str__(self):
        return f"({self.lo:g}, {self.hi:g}{']' if self.hi_closed else ')'}"


def tau_range_fbeta(beta: float) -> Interval:
    if not beta > 0:
        raise InvalidInputError(f"beta must be positive, got {beta!r}")
    b2 = beta * beta
    return Interval(0.0, b2 / (2.0 + b2), True)


def tau_range_jaccard() -> Interval:
    return Interval(0.0, 1.0, False)


def tau_range_for(spec_or_kind, param=None) -> Optional[Interval]:
    """Admissible discrepancy range, or None when no restriction applies (accuracy)."""
    if isinstance(spec_or_kind, MetricSpec):
        kind, param = spec_or_kind.kind, spec_or_kind.param
    else:
        kind = MetricKind(spec_or_kind)
    if kind is MetricKind.FBETA:
        return tau_range_fbeta(1.0 if param is None else param)
    if kind is MetricKind.ACCURACY or (kind is MetricKind.GOWER_LEGENDRE and (param is None or param == 1)):
        return None
    return tau_range_jaccard()


class Verdict(str, enum.Enum):
    SATISFIED = "satisfied"
    VIOLATED = "violated"
    UNVERIFIABLE = "unverifiable"


@dataclass(frozen=True)
class Condition:
    name: str
    verdict: Verdict
    value: Optional[float] = None
    detail: str = ""


@dataclass
class CalibrationReport:
    kind: str
    tau: Optional[float]
    conditions: Dict[str, Condition] = field(default_factory=dict)

    def add(self, name, ok, value=None, detail=""):
        if ok is None:
            verdict = Verdict.UNVERIFIABLE
        else:
            verdict = Verdict.SATISFIED if ok else Verdict.VIOLATED
        self.conditions[name] = Condition(name, verdict, None if value is None else float(value), detail)

    @property
    def overall(self) -> Verdict:
        verdicts = [c.verdict for c in self.conditions.values()]
        if Verdict.VIOLATED in verdicts or Verdict.SATISFIED not in verdicts:
            return Verdict.VIOLATED
        return Verdict.SATISFIED

    @property
    def satisfied(self) -> bool:
        return self.overall is Verdict.SATISFIED

    def verdict(self, name) -> Verdict:
        return self.conditions[name].verdict

    def lines(self):
        out = [f"metric={self.kind}"]
        if self.tau is not None:
            out.append(f"tau={self.tau:g}")
        for c in self.conditions.values():
            val = "" if c.value is None else f" value={c.value:.6g}"
            out.append(f"{c.name}={c.verdict.value}{val}")
        out.append(f"overall={self.overall.value}")
        return out


def _discrepant(loss, tau, h=1e-7):
    """Compare one-sided derivatives at zero: right >= tau * left."""
    if hasattr(loss, "left_derivative_at_zero"):
        left, right = loss.left_derivative_at_zero(), loss.right_derivative_at_zero()
    else:
        left = (loss(0.0) - loss(-h)) / h
        right = (loss(h) - loss(0.0)) / h
    return right - tau * left


def check_general(
    spec: MetricSpec,
    tau: float,
    u_phi_star: Optional[float] = None,
    u_fstar: Optional[float] = None,
    loss=None,
) -> CalibrationReport:
    """Evaluate the general-metric sufficient conditions.

    Conditions 1-5 depend on the coefficients alone. Condition 6 and the
    tau bounds (b), (c) need estimates of the optimal surrogate utility
    ``u_phi_star`` and of the true utility at the surrogate optimum ``u_fstar``;
    they are reported unverifiable when those are not supplied.
    """
    a0p, a0n, a1p, a1n = spec.a0_pos, spec.a0_neg, spec.a1_pos, spec.a1_neg
    rep = CalibrationReport(spec.kind.value if spec.kind else "custom", tau)
    da0, da1 = spec.delta_a0, spec.delta_a1
    rep.add("cond1_delta_a0_positive", da0 > 0, da0)
    rep.add("cond2_delta_a1_nonpositive", da1 <= 0, da1)
    rep.add("cond3_negative_coefficient_nonzero", a0n != 0 or a1n != 0)
    rep.add("cond4_negative_sum_nonzero", a1n + a0n != 0, a1n + a0n)
    cross = a0p * a1n + a0n * a1p
    rep.add("cond5_cross_term_positive", cross > 0, cross)
    if a1n > 0:
        bound = -a0n / a1n
        if u_fstar is None:
            rep.add("cond6_true_utility_bound", None, bound, "needs u_fstar")
        else:
            rep.add("cond6_true_utility_bound", u_fstar > bound, u_fstar - bound)
    else:
        rep.add("cond6_true_utility_bound", True, detail="vacuous: a1_neg <= 0")

    if loss is None and 0 < tau < 1:
        loss = TauDiscrepantLoss(tau)
    if not 0 < tau < 1:
        rep.add("a_tau_discrepant", False, tau, "tau outside (0, 1)")
    else:
        gap = _discrepant(loss, tau)
        rep.add("a_tau_discrepant", gap >= -1e-12, gap)

    if u_phi_star is None:
        rep.add("b_surrogate_tau_bound", None, detail="needs u_phi_star")
        rep.add("c_true_tau_bound", None, detail="needs u_phi_star and u_fstar")
        return rep

    with np.errstate(divide="ignore", invalid="ignore"):
        b_bound = np.float64(a0p - a1p) / np.float64(a1n + a0n) * (
            np.float64(-a0n + a1n * u_phi_star) / np.float64(a0p + a1p * u_phi_star)
        )
    rep.add("b_surrogate_tau_bound", bool(np.isfinite(b_bound) and tau <= b_bound), b_bound)

    if u_fstar is None:
        rep.add("c_true_tau_bound", None, detail="needs u_fstar")
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            c_bound = np.float64(a0n - a1n * u_fstar) / np.float64(a1p * u_fstar - a0p) * (
                np.float64(a0p + a1p * u_phi_star) / np.float64(-a0n + a1n * u_phi_star)
            )
        rep.add("c_true_tau_bound", bool(np.isfinite(c_bound) and tau <= c_bound), c_bound)
    return rep


def check_accuracy(loss, grid=None, h=1e-7, tol=1e-10) -> CalibrationReport:
    """Accuracy calibration: convex loss with negative slope on both sides of zero."""
    rep = CalibrationReport(MetricKind.ACCURACY.value, getattr(loss, "tau", None))
    t = np.linspace(-20.0, 20.0, 4001) if grid is None else np.asarray(grid, dtype=float)
    vals = np.array([loss(v) for v in t], dtype=float)
    second = vals[:-2] - 2 * vals[1:-1] + vals[2:]
    rep.add("convex_on_grid", bool(np.all(second >= -tol)), second.min())
    left = (loss(0.0) - loss(-h)) / h
    right = (loss(h) - loss(0.0)) / h
    rep.add("left_derivative_negative", left < 0, left)
    rep.add("right_derivative_negative", right < 0, right)
    return rep


def check_metric(spec: MetricSpec, tau: float, u_phi_star=None, u_fstar=None, loss=None) -> CalibrationReport:
    """Dispatch to the metric-specific check.

    F-beta and Jaccard use their closed-form tau ranges (plus the bound on the
    optimal surrogate utility when it is supplied), accuracy uses the
    loss-only check, anything else the general conditions.
    """
    if loss is None and 0 < tau < 1:
        loss = TauDiscrepantLoss(tau)
    kind = spec.kind
    if kind is MetricKind.ACCURACY or (kind is MetricKind.GOWER_LEGENDRE and spec.param == 1):
        return check_accuracy(loss)
    if kind not in (MetricKind.FBETA, MetricKind.JACCARD):
        return check_general(spec, tau, u_phi_star, u_fstar, loss)

    rep = CalibrationReport(kind.value, tau)
    rng = tau_range_for(spec)
    rep.add("tau_in_range", tau in rng, tau, str(rng))
    if loss is not None:
        gap = _discrepant(loss, tau)
        rep.add("a_tau_discrepant", gap >= -1e-12, gap)
    else:
        rep.add("a_tau_discrepant", False, tau, "tau outside (0, 1)")
    if kind is MetricKind.FBETA:
        b2 = spec.param**2
        need = (1 + b2) * tau / (b2 - tau) if tau < b2 else np.inf
    else:
        need = tau
    if u_phi_star is None:
        rep.add("optimal_surrogate_bound", None, need, "needs u_phi_star")
    else:
        rep.add("optimal_surrogate_bound", u_phi_star >= need, u_phi_star - need)
    return rep
