"""Command-line entry point.

    fracopt benchmark --metric f1 --data breast-cancer --registry datasets.txt
    fracopt calibcheck --metric jaccard --tau 0.75
    fracopt --experiment convergence --synthetic gauss:n=2000 --trials 5

Exit codes: 0 success, 1 config error, 2 all datasets skipped,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .calibration import check_metric
from .harness import EXPERIMENTS, RUNNERS, AllSkipped, ConfigError, ExperimentConfig, coerce, read_config_file, summarize

EXIT_OK, EXIT_CONFIG, EXIT_SKIPPED, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("fracopt")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracopt", description="Direct optimization of linear-fractional metrics.")
    p.add_argument("command", nargs="?", choices=EXPERIMENTS, help="experiment to run (same as --experiment)")
    p.add_argument("--config", help="flat key=value config file; flags override it")
    p.add_argument("--experiment", choices=EXPERIMENTS)
    p.add_argument("--metric", help="f1, fbeta, jaccard, gower-legendre, accuracy")
    p.add_argument("--beta", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--methods", help="comma-separated subset of U-GD,U-BFGS,ERM,W-ERM,Plug-in")
    p.add_argument("--trials", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--lr", type=float, help="fixed learning rate (skips validation over the grid)")
    p.add_argument("--lr-grid", help="comma-separated learning-rate grid")
    p.add_argument("--data", help="comma-separated dataset names (see --registry) or LIBSVM paths")
    p.add_argument("--registry", help="file with one 'name path' per line")
    p.add_argument("--synthetic", help="oracle2[:n=N] or gauss[:n=N,d=D,pi=P,sep=S]; ';' separates several")
    p.add_argument("--sizes", help="comma-separated sample sizes for sample-complexity")
    p.add_argument("--taus", help="comma-separated tau grid for tau-sensitivity")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--jobs", type=int)
    p.add_argument("--bias", action="store_true", default=None, help="append a constant feature")
    p.add_argument("--force-tau", action="store_true", default=None)
    p.add_argument("--hinge-iters", type=int)
    p.add_argument("--u-phi-star", type=float, help="estimate of the optimal surrogate utility (calibcheck)")
    p.add_argument("--u-fstar", type=float, help="estimate of the true utility at the surrogate optimum (calibcheck)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args) -> ExperimentConfig:
    values = read_config_file(args.config) if args.config else {}
    flags = {
        "experiment": args.experiment or args.command,
        "metric": args.metric, "beta": args.beta, "alpha": args.alpha, "tau": args.tau,
        "methods": args.methods, "trials": args.trials, "iters": args.iters, "lr": args.lr,
        "lr_grid": args.lr_grid, "data": args.data, "registry": args.registry,
        "synthetic": args.synthetic, "sizes": args.sizes, "taus": args.taus, "seed": args.seed,
        "out": args.out, "jobs": args.jobs, "bias": args.bias, "force_tau": args.force_tau,
        "hinge_iters": args.hinge_iters, "u_phi_star": args.u_phi_star, "u_fstar": args.u_fstar,
    }
    for key, value in flags.items():
        if value is not None:
            k, v = coerce(key, value)
            values[k] = v
    try:
        return ExperimentConfig(**values).validate()
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def run_calibcheck(cfg: ExperimentConfig) -> int:
    metric = cfg.metric_obj
    pi = 0.5  # the checked conditions do not involve the offsets
    report = check_metric(metric.spec(pi), cfg.tau_value, cfg.u_phi_star, cfg.u_fstar)
    print("\n".join(report.lines()))
    return EXIT_OK if report.satisfied else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if cfg.experiment == "calibcheck":
            return run_calibcheck(cfg)
        csv_text = RUNNERS[cfg.experiment](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AllSkipped as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SKIPPED
    except (AssertionError, RuntimeError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    if cfg.out:
        Path(cfg.out).write_text(csv_text, newline="")
        print(summarize(csv_text), file=sys.stderr)
    else:
        sys.stdout.write(csv_text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
