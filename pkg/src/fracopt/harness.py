"""Experiment protocols: benchmark, convergence, sample complexity and tau sensitivity.

Every experiment is a deterministic function of its config, the dataset
contents and the seeds; per-trial seeds are ``seed + trial``. Results are
written as CSV with a header row.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import baselines
from .calibration import tau_range_for
from .data import (
    Dataset,
    TwoGaussians,
    SyntheticSpec,
    generate_synthetic,
    load_libsvm,
    minmax_scale,
    read_registry,
    split,
    stratified_subsample,
)
from .exceptions import InvalidInputError
from .metrics import DiscreteDistribution, Metric, MetricKind, confusion_from_sample, true_utility
from .optimizer import BFGS, NGA, LEARNING_RATE_GRID, OptimizerConfig, hybrid_train, select_learning_rate
from .surrogate import SplitSample, TauDiscrepantLoss

log = logging.getLogger(__name__)

EXPERIMENTS = ("benchmark", "convergence", "sample-complexity", "tau-sensitivity", "calibcheck")
PROPOSED = ("U-GD", "U-BFGS")
METHODS = PROPOSED + ("ERM", "W-ERM", "Plug-in")
SAMPLE_SIZES = tuple(range(20, 401, 20))
TAU_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))

# the two-point distribution used by the oracle tests: one-hot features
ORACLE2 = DiscreteDistribution(np.eye(2), [0.9, 0.2], [0.5, 0.5])


class ConfigError(InvalidInputError):
    pass


class AllSkipped(RuntimeError):
    pass


def default_tau(metric: Metric) -> float:
    if metric.kind is MetricKind.FBETA:
        beta = metric.param or 1.0
        if beta == 1.0:
            return 0.33
        return round(0.99 * beta**2 / (2 + beta**2), 4)
    if metric.kind is MetricKind.JACCARD:
        return 0.75
    return 0.5


@dataclass
class ExperimentConfig:
    experiment: str = "benchmark"
    metric: str = "f1"
    beta: Optional[float] = None
    alpha: Optional[float] = None
    tau: Optional[float] = None
    methods: Tuple[str, ...] = METHODS
    trials: int = 50
    iters: int = 300
    lr_grid: Tuple[float, ...] = LEARNING_RATE_GRID
    lr: Optional[float] = None
    seed: int = 0
    data: Tuple[str, ...] = ()
    registry: Optional[str] = None
    synthetic: Optional[str] = None
    out: Optional[str] = None
    force_tau: bool = False
    jobs: int = 1
    sizes: Tuple[int, ...] = SAMPLE_SIZES
    taus: Tuple[float, ...] = TAU_GRID
    bias: bool = False
    hinge_iters: int = 10_000
    u_phi_star: Optional[float] = None
    u_fstar: Optional[float] = None

    @property
    def metric_obj(self) -> Metric:
        return Metric.parse(self.metric, beta=self.beta, alpha=self.alpha)

    @property
    def tau_value(self) -> float:
        return default_tau(self.metric_obj) if self.tau is None else self.tau

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        metric = self.metric_obj
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.iters < 1:
            raise ConfigError("iters must be >= 1")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {METHODS}")
        if self.experiment in ("convergence", "tau-sensitivity"):
            bad = [m for m in self.methods if m not in PROPOSED]
            if bad:
                raise ConfigError(f"{self.experiment} only supports {PROPOSED}, got {bad}")
        if self.experiment == "calibcheck":
            return self
        tau = self.tau_value
        if not 0 < tau < 1:
            raise ConfigError(f"tau must lie in (0, 1), got {tau}")
        rng = tau_range_for(metric.kind, metric.param)
        if rng is not None and tau not in rng and not self.force_tau and self.experiment != "tau-sensitivity":
            raise ConfigError(f"tau={tau} outside calibration range {rng} for {metric.name}; pass --force-tau")
        if not self.data and not self.synthetic:
            raise ConfigError("no datasets: pass --data or --synthetic")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        return self


_TUPLE_FIELDS = {"methods": str, "lr_grid": float, "data": str, "sizes": int, "taus": float}
_BOOL_FIELDS = {"force_tau", "bias"}


def coerce(key: str, value):
    """Convert a raw string config value to the field's type."""
    key = key.replace("-", "_")
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    if key not in types:
        raise ConfigError(f"unknown config key {key!r}")
    if not isinstance(value, str):
        return key, value
    value = value.strip()
    if key in _TUPLE_FIELDS:
        conv = _TUPLE_FIELDS[key]
        return key, tuple(conv(v.strip()) for v in value.split(",") if v.strip())
    if key in _BOOL_FIELDS:
        return key, value.lower() in ("1", "true", "yes", "on")
    if key in ("trials", "iters", "seed", "jobs", "hinge_iters"):
        return key, int(value)
    if key in ("beta", "alpha", "tau", "lr", "u_phi_star", "u_fstar"):
        return key, None if value.lower() in ("", "none") else float(value)
    return key, value


def read_config_file(path) -> Dict[str, object]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        try:
            k, v = coerce(key.strip(), value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
        out[k] = v
    return out


# --------------------------------------------------------------------------
# data resolution


def parse_synthetic(text: str, seed: int) -> Dataset:
    """``oracle2[:n=N]`` or ``gauss[:n=N,d=D,pi=P,sep=S]``."""
    name, _, rest = text.partition(":")
    opts = {}
    for part in filter(None, rest.split(",")):
        k, _, v = part.partition("=")
        opts[k.strip()] = v.strip()
    n = int(opts.pop("n", 2000))
    if name == "oracle2":
        gen = ORACLE2
    elif name == "gauss":
        d = int(opts.pop("d", 5))
        pi = float(opts.pop("pi", 0.3))
        sep = float(opts.pop("sep", 1.5))
        mean_pos = np.full(d, sep / np.sqrt(d))
        gen = TwoGaussians(mean_pos, np.zeros(d), np.eye(d), pi)
    else:
        raise ConfigError(f"unknown synthetic generator {name!r}")
    if opts:
        raise ConfigError(f"unknown synthetic options {sorted(opts)}")
    ds, _ = generate_synthetic(SyntheticSpec(gen, n, seed), name=text)
    return ds


def resolve_datasets(cfg: ExperimentConfig) -> List[Dataset]:
    registry = read_registry(cfg.registry) if cfg.registry else {}
    out = []
    for entry in cfg.data:
        path = registry.get(entry, Path(entry))
        try:
            out.append(load_libsvm(path, name=entry if entry in registry else None))
        except (OSError, ValueError) as exc:
            log.warning("skipping dataset %s: %s", entry, exc)
    if cfg.synthetic:
        for spec in cfg.synthetic.split(";"):
            out.append(parse_synthetic(spec.strip(), cfg.seed))
    if not out:
        raise AllSkipped("no dataset could be loaded")
    return out


# --------------------------------------------------------------------------
# single trials


def _utility(metric: Metric, y, scores, pi=None) -> float:
    pi = float(np.mean(y > 0)) if pi is None else pi
    if not 0 < pi < 1:
        return float("nan")
    try:
        return true_utility(metric.spec(pi), confusion_from_sample(y, scores))
    except ArithmeticError:
        return float("nan")


def _prepare(train: Dataset, test: Dataset, bias: bool):
    train, test = minmax_scale(train, test)
    if bias:
        train, test = train.with_bias(), test.with_bias()
    return train, test


def _erm_init(x, y, hinge_iters):
    return baselines.erm_hinge(x, y, baselines.ERM_LAMBDA, hinge_iters).theta


def train_proposed(method, train: Dataset, metric: Metric, tau, cfg: ExperimentConfig, seed,
                   init_theta=None, monitor=None, patience=20):
    """Fit U-GD / U-BFGS on ``train`` and return the TrainResult."""
    loss = TauDiscrepantLoss(tau)
    opt = OptimizerConfig(
        learning_rate=cfg.lr or 1e-1,
        max_phase1_iters=cfg.iters,
        max_phase2_iters=cfg.iters,
        phase2_method=NGA if method == "U-GD" else BFGS,
        patience=patience,
        seed=seed,
    )
    if init_theta is None:
        init_theta = _erm_init(train.x, train.y, cfg.hinge_iters)
    if cfg.lr is None:
        gamma = select_learning_rate(metric, loss, train.x, train.y, opt, cfg.lr_grid,
                                     init_theta=init_theta, seed=seed)
        opt = replace(opt, learning_rate=gamma)
    spec = metric.spec(train.prior)
    sample = SplitSample.from_arrays(train.x, train.y, seed=seed)
    res = hybrid_train(spec, loss, sample, opt, init_theta, monitor=monitor)
    if not res.phase1_complete:
        log.warning("%s on %s: surrogate numerator stayed non-positive (gamma=%g)", method, train.name,
                    opt.learning_rate)
    return res


def fit_predict(method, train: Dataset, test: Dataset, metric: Metric, tau, cfg: ExperimentConfig, seed):
    """Train one method and return decision scores on ``test``."""
    if method in PROPOSED:
        res = train_proposed(method, train, metric, tau, cfg, seed)
        return test.x @ res.theta
    bcfg = baselines.BaselineConfig(seed=seed, hinge_iters=cfg.hinge_iters)
    if method == "ERM":
        return baselines.erm_hinge(train.x, train.y, bcfg.erm_lambda, cfg.hinge_iters).decision_function(test.x)
    if method == "W-ERM":
        return baselines.weighted_erm(train.x, train.y, metric, bcfg).decision_function(test.x)
    if method == "Plug-in":
        return baselines.plugin(train.x, train.y, metric, bcfg).decision_function(test.x)
    raise ConfigError(f"unknown method {method!r}")


def _benchmark_task(args):
    ds, method, trial, cfg, tau, size = args
    seed = cfg.seed + trial
    metric = cfg.metric_obj
    train, test = split(ds, 0.8, seed)
    if size is not None:
        train = stratified_subsample(train, size, np.random.default_rng(seed))
        if train is None:
            return None
    if train.prior in (0.0, 1.0):
        return None
    train, test = _prepare(train, test, cfg.bias)
    scores = fit_predict(method, train, test, metric, tau, cfg, seed)
    return _utility(metric, test.y, scores)


def _convergence_task(args):
    ds, method, trial, cfg, tau = args
    seed = cfg.seed + trial
    metric = cfg.metric_obj
    train, test = split(ds, 0.8, seed)
    if train.prior in (0.0, 1.0):
        return None
    train, test = _prepare(train, test, cfg.bias)
    init = np.random.default_rng(seed).standard_normal(train.dim)

    def monitor(theta):
        return _utility(metric, test.y, test.x @ theta)

    res = train_proposed(method, train, metric, tau, cfg, seed, init_theta=init,
                         monitor=monitor, patience=None)
    values = [p.monitor for p in res.trajectory[: cfg.iters + 1]]
    values += [values[-1]] * (cfg.iters + 1 - len(values))
    return values


def _run_tasks(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def mean_stderr(values) -> Tuple[float, float]:
    """Mean and sample standard deviation over sqrt(count); stderr is 0 for one value."""
    v = np.asarray([x for x in values if x is not None and np.isfinite(x)], dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


# --------------------------------------------------------------------------
# experiments


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.10g}"
    return str(v)


def to_csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


BENCHMARK_COLUMNS = ("dataset", "method", "metric", "mean", "stderr", "trials")
CONVERGENCE_COLUMNS = ("dataset", "method", "iteration", "mean", "stderr")
SAMPLE_COLUMNS = ("dataset", "size", "method", "metric", "mean", "stderr", "trials")
TAU_COLUMNS = ("dataset", "tau", "method", "metric", "in_calibration_range", "mean", "stderr", "trials")


def run_benchmark(cfg: ExperimentConfig, datasets: Optional[List[Dataset]] = None) -> str:
    datasets = datasets if datasets is not None else resolve_datasets(cfg)
    tau = cfg.tau_value
    tasks = [(ds, m, t, cfg, tau, None) for ds in datasets for m in cfg.methods for t in range(cfg.trials)]
    results = _run_tasks(_benchmark_task, tasks, cfg.jobs)
    groups: Dict[tuple, list] = {}
    for (ds, m, *_), r in zip(tasks, results):
        groups.setdefault((ds.name, m), []).append(r)
    rows = []
    for (name, m), vals in sorted(groups.items()):
        mean, se = mean_stderr(vals)
        done = sum(v is not None and np.isfinite(v) for v in vals)
        rows.append((name, m, cfg.metric_obj.name, mean, se, done))
    return to_csv(BENCHMARK_COLUMNS, rows)


def run_convergence(cfg: ExperimentConfig, datasets: Optional[List[Dataset]] = None) -> str:
    datasets = datasets if datasets is not None else resolve_datasets(cfg)
    tau = cfg.tau_value
    tasks = [(ds, m, t, cfg, tau) for ds in datasets for m in cfg.methods for t in range(cfg.trials)]
    results = _run_tasks(_convergence_task, tasks, cfg.jobs)
    groups: Dict[tuple, list] = {}
    for (ds, m, *_), r in zip(tasks, results):
        if r is not None:
            groups.setdefault((ds.name, m), []).append(r)
    rows = []
    for (name, m), trajs in sorted(groups.items()):
        arr = np.array(trajs, dtype=float)
        for it in range(arr.shape[1]):
            mean, se = mean_stderr(arr[:, it])
            rows.append((name, m, it, mean, se))
    return to_csv(CONVERGENCE_COLUMNS, rows)


def run_sample_complexity(cfg: ExperimentConfig, datasets: Optional[List[Dataset]] = None) -> str:
    datasets = datasets if datasets is not None else resolve_datasets(cfg)
    tau = cfg.tau_value
    tasks = []
    for ds in datasets:
        max_train = int(np.floor(0.8 * ds.n + 0.5))
        for size in cfg.sizes:
            if size < 2 or size > max_train:
                log.warning("skipping size %d for %s (training part has %d rows)", size, ds.name, max_train)
                continue
            tasks += [(ds, m, t, cfg, tau, size) for m in cfg.methods for t in range(cfg.trials)]
    results = _run_tasks(_benchmark_task, tasks, cfg.jobs)
    groups: Dict[tuple, list] = {}
    for (ds, m, _, _, _, size), r in zip(tasks, results):
        groups.setdefault((ds.name, size, m), []).append(r)
    rows = []
    for (name, size, m), vals in sorted(groups.items()):
        mean, se = mean_stderr(vals)
        done = sum(v is not None and np.isfinite(v) for v in vals)
        if done == 0:
            log.warning("no usable subsample for %s size %d", name, size)
            continue
        rows.append((name, size, m, cfg.metric_obj.name, mean, se, done))
    return to_csv(SAMPLE_COLUMNS, rows)


def run_tau_sensitivity(cfg: ExperimentConfig, datasets: Optional[List[Dataset]] = None) -> str:
    datasets = datasets if datasets is not None else resolve_datasets(cfg)
    metric = cfg.metric_obj
    rng = tau_range_for(metric.kind, metric.param)
    tasks = [(ds, m, t, cfg, tau, None)
             for ds in datasets for tau in cfg.taus for m in cfg.methods for t in range(cfg.trials)]
    results = _run_tasks(_benchmark_task, tasks, cfg.jobs)
    groups: Dict[tuple, list] = {}
    for (ds, m, _, _, tau, _), r in zip(tasks, results):
        groups.setdefault((ds.name, tau, m), []).append(r)
    rows = []
    for (name, tau, m), vals in sorted(groups.items()):
        mean, se = mean_stderr(vals)
        inside = rng is None or tau in rng
        done = sum(v is not None and np.isfinite(v) for v in vals)
        rows.append((name, tau, m, metric.name, int(inside), mean, se, done))
    return to_csv(TAU_COLUMNS, rows)


RUNNERS = {
    "benchmark": run_benchmark,
    "convergence": run_convergence,
    "sample-complexity": run_sample_complexity,
    "tau-sensitivity": run_tau_sensitivity,
}


def summarize(csv_text: str) -> str:
    """Fixed-width rendering of a result CSV for the terminal."""
    rows = list(csv.reader(io.StringIO(csv_text)))
    if not rows:
        return ""
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)
