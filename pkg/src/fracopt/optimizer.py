"""Two-phase training of linear models on the surrogate utility.

Phase 1 runs plain gradient ascent on the (concave) surrogate numerator until
it becomes positive. Phase 2 maximizes the fraction, which is quasi-concave on
that region, with unit-length steps along the estimated gradient direction,
optionally preconditioned by a BFGS inverse-Hessian approximation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .exceptions import InvalidInputError, StationaryPoint
from .metrics import confusion_from_sample, true_utility
from .surrogate import (
    SplitSample,
    gradient_direction,
    numerator_gradient,
    surrogate_numerator,
    surrogate_utility,
)

log = logging.getLogger(__name__)

NGA = "nga"
BFGS = "bfgs"
LEARNING_RATE_GRID = (1e1, 1e-1, 1e-3, 1e-5)


@dataclass(frozen=True)
class LinearModel:
    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float).ravel()
        if not np.all(np.isfinite(theta)):
            raise InvalidInputError("model parameters must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def dim(self) -> int:
        return self.theta.size

    def decision_function(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.theta.size:
            raise InvalidInputError(f"expected {self.theta.size} features, got {x.shape[-1]}")
        return x @ self.theta

    def predict(self, x):
        """Labels in {+1, -1}; a zero score predicts -1."""
        return np.where(self.decision_function(x) > 0, 1, -1)


def predict(model: LinearModel, x):
    return model.decision_function(x)


@dataclass
class OptimizerConfig:
    learning_rate: float = 1e-1
    max_phase1_iters: int = 300
    max_phase2_iters: int = 300
    phase2_method: str = NGA
    stop_tol: float = 1e-8
    stationary_tol: float = 1e-10
    # set patience to None to always run the full iteration budget
    patience: Optional[int] = 20
    improve_tol: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidInputError("learning rate must be positive")
        if self.max_phase1_iters < 0 or self.max_phase2_iters < 1:
            raise InvalidInputError("iteration caps must be positive")
        if self.phase2_method not in (NGA, BFGS):
            raise InvalidInputError(f"unknown phase-2 method {self.phase2_method!r}")


@dataclass(frozen=True)
class TrajectoryPoint:
    iteration: int
    phase: int
    numerator: float
    surrogate: float
    monitor: Optional[float] = None


@dataclass
class TrainResult:
    theta: np.ndarray
    phase1_iters: int
    phase2_iters: int
    trajectory: List[TrajectoryPoint] = field(default_factory=list)
    termination: str = ""
    phase1_complete: bool = True

    @property
    def model(self) -> LinearModel:
        return LinearModel(self.theta)


def nga_step(theta, v_hat, gamma):
    """theta + gamma * v_hat / |v_hat|; the step has length exactly gamma."""
    v = np.asarray(v_hat, dtype=float)
    norm = np.linalg.norm(v)
    if norm == 0 or not np.isfinite(norm):
        raise StationaryPoint("zero ascent direction")
    return np.asarray(theta, dtype=float) + gamma * (v / norm)


@dataclass
class BFGSState:
    """Inverse-Hessian approximation for the ascent problem.

    Stores the previous iterate and direction so the curvature pair for the
    update is formed on the next call.
    """

    h: np.ndarray
    prev_theta: Optional[np.ndarray] = None
    prev_v: Optional[np.ndarray] = None
    skips: int = 0
    resets: int = 0

    @classmethod
    def identity(cls, dim: int) -> "BFGSState":
        return cls(np.eye(dim))

    def reset(self):
        self.h = np.eye(self.h.shape[0])
        self.skips = 0
        self.resets += 1


def bfgs_update(h, s, y, curvature_tol=1e-12):
    """Standard BFGS inverse update; returns None when s.y <= curvature_tol."""
    sy = float(s @ y)
    if not sy > curvature_tol:
        return None
    rho = 1.0 / sy
    hy = h @ y
    # (I - rho s y^T) H (I - rho y s^T) + rho s s^T, expanded
    return h - rho * (np.outer(s, hy) + np.outer(hy, s)) + (rho * rho * (y @ hy) + rho) * np.outer(s, s)


def normalized_bfgs_step(state: BFGSState, theta, v_hat, gamma, curvature_tol=1e-12):
    """One unit-normalized quasi-Newton ascent step.

    Maximizing U is minimizing -U, so the gradient difference fed to the
    update is y = -(v_hat - v_prev). Pairs with s.y <= ``curvature_tol`` are
    skipped; after ``dim`` consecutive skips H is reset to the identity.
    Returns ``(theta_new, state)``; ``state`` is updated in place.
    """
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(v_hat, dtype=float)
    dim = theta.size
    if state.prev_theta is not None:
        s = theta - state.prev_theta
        y = -(v - state.prev_v)
        h_new = bfgs_update(state.h, s, y, curvature_tol)
        if h_new is None:
            state.skips += 1
            if state.skips >= dim:
                state.reset()
        else:
            state.h = h_new
            state.skips = 0

    p = state.h @ v
    pn = np.linalg.norm(p)
    if not np.isfinite(pn) or not np.all(np.isfinite(p)) or float(p @ v) <= 0:
        # lost the ascent property or blew up: restart from steepest ascent
        state.reset()
        p = v
        pn = np.linalg.norm(v)
    if pn == 0:
        raise StationaryPoint("zero ascent direction")
    new = theta + gamma * (p / pn)
    state.prev_theta = theta.copy()
    state.prev_v = v.copy()
    return new, state


def hybrid_train(
    spec,
    loss,
    split: SplitSample,
    cfg: OptimizerConfig,
    init_theta,
    monitor: Optional[Callable[[np.ndarray], float]] = None,
) -> TrainResult:
    """Maximize the empirical surrogate utility from ``init_theta``.

    ``monitor`` is evaluated on every recorded iterate (e.g. a validation or
    test utility) and stored in the trajectory. The returned ``theta`` is the
    phase-2 iterate with the highest surrogate utility, not the last one.
    """
    theta = np.array(init_theta, dtype=float).ravel()
    if theta.size != split.dim:
        raise InvalidInputError(f"initial theta has {theta.size} entries, data has {split.dim} features")
    gamma = cfg.learning_rate
    traj: List[TrajectoryPoint] = []

    def record(it, phase, th):
        num = surrogate_numerator(spec, loss, th, split.x0, split.y0)
        try:
            su = surrogate_utility(spec, loss, th, split)
        except ArithmeticError:
            su = float("nan")
        traj.append(TrajectoryPoint(it, phase, num, su, monitor(th) if monitor else None))
        return num, su

    num, _ = record(0, 1, theta)
    it = 0
    p1 = 0
    while num <= 0 and p1 < cfg.max_phase1_iters:
        g = numerator_gradient(spec, loss, theta, split.x0, split.y0)
        if not np.any(g):
            break
        theta = theta + gamma * g
        p1 += 1
        it += 1
        num, _ = record(it, 1, theta)
    phase1_complete = num > 0
    if not phase1_complete:
        log.info("surrogate numerator still non-positive after %d phase-1 iterations", p1)

    best_theta = theta.copy()
    best_u = traj[-1].surrogate
    if not np.isfinite(best_u):
        best_u = -np.inf
    since_best = 0
    state = BFGSState.identity(theta.size) if cfg.phase2_method == BFGS else None
    reason = "max_iters"
    p2 = 0
    while p2 < cfg.max_phase2_iters:
        v = gradient_direction(spec, loss, theta, split)
        if not np.all(np.isfinite(v)):
            reason = "nonfinite"
            break
        if np.linalg.norm(v) < cfg.stationary_tol:
            reason = "stationary"
            break
        if gamma < cfg.stop_tol:
            reason = "step_small"
            break
        if state is None:
            theta = nga_step(theta, v, gamma)
        else:
            theta, state = normalized_bfgs_step(state, theta, v, gamma)
        p2 += 1
        it += 1
        _, su = record(it, 2, theta)
        if su > best_u + cfg.improve_tol:
            best_u, best_theta, since_best = su, theta.copy(), 0
        else:
            since_best += 1
            if su > best_u:
                best_u, best_theta = su, theta.copy()
            if cfg.patience is not None and since_best >= cfg.patience:
                reason = "no_improvement"
                break
    if not phase1_complete:
        reason = "phase1_incomplete"
    return TrainResult(best_theta, p1, p2, traj, reason, phase1_complete)


def _val_utility(metric, x, y, theta):
    cm = confusion_from_sample(y, x @ theta)
    try:
        return true_utility(metric.spec(np.mean(y > 0)), cm)
    except ArithmeticError:
        return float("nan")


def select_learning_rate(
    metric,
    loss,
    x,
    y,
    cfg: OptimizerConfig,
    grid: Sequence[float] = LEARNING_RATE_GRID,
    init_theta=None,
    seed: int = 0,
    init_fn=None,
) -> float:
    """Pick the step size with the best validation true utility on a seeded 4:1 split.

    ``metric`` is an unresolved ``Metric``; coefficients use the prior of each
    training part. Ties go to the smaller step size.
    """
    grid = sorted(set(float(g) for g in grid))
    if not grid:
        raise InvalidInputError("learning-rate grid is empty")
    if len(grid) == 1:
        return grid[0]
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    idx = np.random.default_rng(seed).permutation(n)
    n_tr = int(np.floor(0.8 * n + 0.5))
    tr, va = idx[:n_tr], idx[n_tr:]
    pi = float(np.mean(y[tr] > 0))
    if not 0 < pi < 1 or va.size == 0:
        log.warning("degenerate learning-rate split; using smallest step size")
        return grid[0]
    spec = metric.spec(pi)
    split = SplitSample.from_arrays(x[tr], y[tr], seed=seed)
    if init_theta is None:
        init_theta = init_fn(x[tr], y[tr]) if init_fn else np.zeros(x.shape[1])
    scores = []
    for g in grid:
        run_cfg = OptimizerConfig(**{**cfg.__dict__, "learning_rate": g})
        res = hybrid_train(spec, loss, split, run_cfg, init_theta)
        scores.append(_val_utility(metric, x[va], y[va], res.theta))
    scores = np.array(scores)
    if np.all(np.isnan(scores)):
        log.warning("all learning-rate candidates degenerate; using smallest step size")
        return grid[0]
    # grid is ascending, so argmax's first hit is the smallest tied rate
    return grid[int(np.nanargmax(scores))]
