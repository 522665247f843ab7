"""Baselines: hinge-loss ERM, cost-sensitive ERM over a cost grid, and plug-in thresholding."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_expit

from .exceptions import InvalidInputError
from .metrics import confusion_from_sample, true_utility
from .optimizer import LinearModel

GRID_20 = tuple(1e-3 + (1 - 2e-3) / 20 * i for i in range(1, 21))
L2_GRID = (1e-1, 1e-3, 1e-5)
ERM_LAMBDA = 1e-2


@dataclass
class BaselineConfig:
    l2_lambda_grid: Tuple[float, ...] = L2_GRID
    erm_lambda: float = ERM_LAMBDA
    grid_20: Tuple[float, ...] = GRID_20
    outer_ratio: float = 0.8
    inner_ratio: float = 0.9
    hinge_iters: int = 10_000
    logistic_iters: int = 10_000
    logistic_gtol: float = 1e-6
    seed: int = 0


def _split_idx(n, ratio, rng):
    idx = rng.permutation(n)
    k = int(np.floor(ratio * n + 0.5))
    return idx[:k], idx[k:]


def _require_both_classes(y):
    if np.all(y > 0) or np.all(y <= 0):
        raise InvalidInputError("training data must contain both classes")


def hinge_objective(theta, x, y, lam, weights=None):
    losses = np.maximum(0.0, 1.0 - y * (x @ theta))
    if weights is not None:
        losses = weights * losses
    return float(losses.mean() + lam * theta @ theta)


@dataclass
class HingeTrace:
    best: np.ndarray
    best_objective: float
    averaged: np.ndarray
    averaged_objective: float
    checkpoints: list = field(default_factory=list)


def pegasos(x, y, lam, iters=10_000, weights=None, n_checkpoints=20) -> HingeTrace:
    """Deterministic full-batch projected subgradient descent on the hinge objective.

    Minimizes mean(w * hinge) + lam * |theta|^2; the objective is 2*lam strongly
    convex, so the step is 1 / (2 lam t), and iterates are projected onto the
    ball that must contain the minimizer.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = x.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    radius = np.sqrt(max(w.max(), 1e-300) / lam)
    theta = np.zeros(d)
    avg = np.zeros(d)
    best, best_obj = theta.copy(), hinge_objective(theta, x, y, lam, w)
    every = max(iters // n_checkpoints, 1)
    checkpoints = []
    for t in range(1, iters + 1):
        margins = y * (x @ theta)
        active = margins < 1.0
        obj = float(np.mean(w * np.maximum(0.0, 1.0 - margins)) + lam * theta @ theta)
        if obj < best_obj:
            best, best_obj = theta.copy(), obj
        grad = 2.0 * lam * theta - ((w * y)[active] @ x[active]) / n
        theta = theta - grad / (2.0 * lam * t)
        norm = np.linalg.norm(theta)
        if norm > radius:
            theta *= radius / norm
        avg += (theta - avg) / t
        if t % every == 0:
            checkpoints.append(best_obj)
    final_obj = hinge_objective(theta, x, y, lam, w)
    if final_obj < best_obj:
        best, best_obj = theta.copy(), final_obj
    avg_obj = hinge_objective(avg, x, y, lam, w)
    return HingeTrace(best, best_obj, avg, avg_obj, checkpoints)


def _hinge_model(trace: HingeTrace) -> LinearModel:
    if trace.averaged_objective <= trace.best_objective:
        return LinearModel(trace.averaged)
    return LinearModel(trace.best)


def erm_hinge(x, y, lam=ERM_LAMBDA, iters=10_000) -> LinearModel:
    """l2-regularized hinge-loss ERM."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise InvalidInputError("empty training set")
    return _hinge_model(pegasos(x, y, lam, iters))


def cost_weights(y, c):
    """Per-example weights 2c for positives and 2(1 - c) for negatives."""
    return np.where(np.asarray(y) > 0, 2.0 * c, 2.0 * (1.0 - c))


def weighted_hinge(x, y, c, lam, iters=10_000) -> LinearModel:
    return _hinge_model(pegasos(x, y, lam, iters, weights=cost_weights(y, c)))


def _utility(metric, x, y, scores):
    pi = float(np.mean(y > 0))
    cm = confusion_from_sample(y, scores)
    if not 0 < pi < 1:
        return float("nan")
    try:
        return true_utility(metric.spec(pi), cm)
    except ArithmeticError:
        return float("nan")


def _better(u, best):
    return np.isfinite(u) and (best is None or u > best)


@dataclass
class WeightedERMResult:
    model: LinearModel
    cost: float
    lam: float
    validation_utility: float
    n_trainings: int


def weighted_erm(x, y, metric, cfg: Optional[BaselineConfig] = None, return_info=False):
    """Cost-sensitive hinge ERM with the cost and l2 weight picked by validation.

    For each cost, the regularization weight is chosen on a 9:1 split of the
    4/5 training part; the cost is then chosen by the true utility on the
    held-out 1/5.
    """
    cfg = cfg or BaselineConfig()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _require_both_classes(y)
    rng = np.random.default_rng(cfg.seed)
    outer_tr, outer_va = _split_idx(y.size, cfg.outer_ratio, rng)
    inner_tr_rel, inner_va_rel = _split_idx(outer_tr.size, cfg.inner_ratio, rng)
    inner_tr, inner_va = outer_tr[inner_tr_rel], outer_tr[inner_va_rel]

    best = None
    n_trainings = 0
    for c in cfg.grid_20:
        cand, cand_u, cand_lam = None, None, None
        for lam in cfg.l2_lambda_grid:
            model = weighted_hinge(x[inner_tr], y[inner_tr], c, lam, cfg.hinge_iters)
            n_trainings += 1
            u = _utility(metric, x[inner_va], y[inner_va], model.decision_function(x[inner_va]))
            if cand is None or _better(u, cand_u):
                cand, cand_u, cand_lam = model, u, lam
        u = _utility(metric, x[outer_va], y[outer_va], cand.decision_function(x[outer_va]))
        if best is None or _better(u, best.validation_utility):
            best = WeightedERMResult(cand, c, cand_lam, u, 0)
    best.n_trainings = n_trainings
    return best if return_info else best.model


def logistic_regression(x, y, lam, iters=10_000, gtol=1e-6) -> LinearModel:
    """l2-regularized logistic regression: mean log-loss + lam * |theta|^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size

    def fun(theta):
        m = y * (x @ theta)
        val = -np.mean(log_expit(m)) + lam * theta @ theta
        grad = -((y * expit(-m)) @ x) / n + 2.0 * lam * theta
        return val, grad

    res = minimize(fun, np.zeros(x.shape[1]), jac=True, method="L-BFGS-B",
                   options={"maxiter": iters, "gtol": gtol})
    return LinearModel(res.x)


@dataclass(frozen=True)
class PluginClassifier:
    """x -> sgn(eta_hat(x) - threshold) with eta_hat a logistic model."""

    posterior: LinearModel
    threshold: float
    lam: float = float("nan")

    def predict_proba(self, x):
        return expit(self.posterior.decision_function(x))

    def decision_function(self, x):
        return self.predict_proba(x) - self.threshold

    def predict(self, x):
        return np.where(self.decision_function(x) > 0, 1, -1)


def best_threshold(metric, eta_hat, y, grid=GRID_20):
    """Grid threshold with the highest utility; the first one wins ties."""
    best_t, best_u = grid[0], None
    for t in grid:
        u = _utility(metric, None, y, eta_hat - t)
        if _better(u, best_u):
            best_t, best_u = t, u
    return best_t, best_u


def plugin(x, y, metric, cfg: Optional[BaselineConfig] = None) -> PluginClassifier:
    """Posterior estimate by logistic regression, then a validated threshold.

    The 4/5 training part is split 9:1: the first piece fits the posterior,
    the second picks the threshold. The l2 weight is chosen by the utility of
    the resulting classifier on the held-out 1/5.
    """
    cfg = cfg or BaselineConfig()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _require_both_classes(y)
    rng = np.random.default_rng(cfg.seed)
    outer_tr, outer_va = _split_idx(y.size, cfg.outer_ratio, rng)
    fit_rel, thr_rel = _split_idx(outer_tr.size, cfg.inner_ratio, rng)
    fit, thr = outer_tr[fit_rel], outer_tr[thr_rel]

    best, best_u = None, None
    for lam in cfg.l2_lambda_grid:
        post = logistic_regression(x[fit], y[fit], lam, cfg.logistic_iters, cfg.logistic_gtol)
        t, _ = best_threshold(metric, expit(post.decision_function(x[thr])), y[thr], cfg.grid_20)
        clf = PluginClassifier(post, t, lam)
        u = _utility(metric, None, y[outer_va], clf.decision_function(x[outer_va]))
        if best is None or _better(u, best_u):
            best, best_u = clf, u
    return best
