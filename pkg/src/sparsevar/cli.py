"""Command-line interface.

    sparsevar [--config run.toml] [--set section.key=value ...] COMMAND [options]

Commands: simulate, fit, cv, montecarlo, forecast. Randomness comes from the
top-level ``seed``: ``simulate`` draws the series from it, ``cv``/``fit`` use it
for fold assignment, and ``montecarlo`` uses it as the master seed from which
each (T, replication) seed is derived.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .forecast import YieldDataset, rolling_evaluation, synthetic_yields
from .montecarlo import EstimatorSpec, ExperimentSpec, run_experiment
from .penalties import PenaltySpec
from .qml import WeightingMatrix, sandwich_covariance
from .solver import FitConfig, coordinate_descent, cv_fit
from .var_core import TimeSeriesData, build_regression, reference_design, reference_noise, simulate

logger = logging.getLogger("sparsevar")

LOG_ENV = "SPARSEVAR_LOG_LEVEL"


def _g(x) -> str:
    return f"{x:.6g}"


def _write_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _weight(spec: str, k: int):
    if spec in ("identity", "", None):
        return WeightingMatrix.identity(k)
    return WeightingMatrix(np.loadtxt(spec, delimiter=",", ndmin=2))


def cmd_simulate(cfg: cfgmod.RunConfig) -> int:
    sec = cfg.simulate
    data = simulate(reference_design(), reference_noise(cfg.seed), sec.T, sec.burn_in)
    if sec.start_date:
        data.dates = (np.datetime64(sec.start_date, "M") + np.arange(data.T)).astype("datetime64[D]")
    Path(sec.out).parent.mkdir(parents=True, exist_ok=True)
    data.to_csv(sec.out)
    print(f"wrote {data.T} x {data.k} series to {sec.out}")
    return 0


def cmd_fit(cfg: cfgmod.RunConfig) -> int:
    sec = cfg.fit
    data = TimeSeriesData.from_csv(sec.data)
    X, Y = build_regression(data, sec.r)
    w = _weight(sec.weight, data.k)
    base = PenaltySpec(sec.penalty, 1.0 if not sec.lam else sec.lam, sec.a)
    report = {}
    if sec.lam is None:
        conf = FitConfig(tol=sec.tol, max_iter=sec.max_iter, standardize=sec.standardize)
        fit, cv = cv_fit(X, Y, w, base, conf, sec.folds, cfg.seed, certify=sec.certify)
        report["cv"] = {"best_lambda": cv.best_lambda, "folds": sec.folds}
    else:
        spec = None if sec.lam == 0 else base
        fit = coordinate_descent(X, Y, w, spec, max_iter=sec.max_iter, tol=sec.tol,
                                 standardize=sec.standardize, certify=sec.certify)
    report.update(fit.to_dict())
    report["k"], report["r"] = data.k, sec.r
    if sec.covariance and fit.support:
        cov = sandwich_covariance(fit.theta_hat, fit.support, X, Y, w)
        report["covariance"] = {"support": list(fit.support), "matrix": cov.tolist(), "n": X.shape[0]}
    _write_json(sec.out, report)
    print(f"lambda={_g(fit.lam)} support={len(fit.support)}/{fit.theta_hat.size} "
          f"objective={_g(fit.objective)} converged={fit.converged} n_iter={fit.n_iter}")
    if fit.certificate is not None:
        c = fit.certificate
        print(f"certificate passed={c.passed} stationarity_gap={_g(c.stationarity_gap)} "
              f"inactive_margin={_g(c.inactive_margin)} eigen_margin={_g(c.eigen_margin)}")
    return 0


def cmd_cv(cfg: cfgmod.RunConfig) -> int:
    sec = cfg.cv
    data = TimeSeriesData.from_csv(sec.data)
    X, Y = build_regression(data, sec.r)
    conf = FitConfig(n_lambda=sec.n_lambda, lambda_min_ratio=sec.lambda_min_ratio,
                     contiguous_folds=sec.contiguous)
    fit, cv = cv_fit(X, Y, _weight(sec.weight, data.k), PenaltySpec(sec.penalty, 1.0, sec.a), conf,
                     sec.folds, cfg.seed)
    _write_json(sec.out, {"best_lambda": cv.best_lambda, "curve": cv.cv_curve.to_dict(), "fit": fit.to_dict()})
    print(f"best lambda={_g(cv.best_lambda)} support={len(fit.support)}/{fit.theta_hat.size}")
    return 0


def cmd_montecarlo(cfg: cfgmod.RunConfig) -> int:
    sec = cfg.montecarlo
    spec = ExperimentSpec(
        sample_sizes=tuple(sec.sample_sizes), replications=sec.replications,
        estimators=tuple(EstimatorSpec.parse(str(e)) for e in sec.estimators),
        cv=sec.cv, cv_mode=sec.cv_mode, folds=sec.folds, master_seed=cfg.seed,
        burn_in=sec.burn_in, fixed_lambda=sec.fixed_lambda, workers=cfg.workers,
    )
    report = run_experiment(spec)
    _write_json(sec.out, report.to_dict())
    table = report.render_table()
    if sec.table:
        Path(sec.table).write_text(table)
    print(table, end="")
    failed = sum(c.failures for c in report.cells)
    if failed:
        logger.error("%d replication failures", failed)
        return 1
    return 0


def cmd_forecast(cfg: cfgmod.RunConfig) -> int:
    sec = cfg.forecast
    if sec.data:
        ds = YieldDataset.from_csv(sec.data)
    else:
        ds = synthetic_yields(sec.synthetic_seed)
    spec = PenaltySpec(sec.penalty, sec.lam or 1.0, sec.a)
    rep = rolling_evaluation(ds, sec.start, sec.end, sec.horizons, sec.tau_medium, sec.r, spec, sec.lam)
    _write_json(sec.out, rep.to_dict())
    rep.rmse_table().to_csv(f"{sec.tables_prefix}_rmse.csv", index=False, float_format="%.17g")
    rep.ratio_table().to_csv(f"{sec.tables_prefix}_ratio.csv", index=False, float_format="%.17g")
    ratio = rep.ratio_table()
    print("sVAR/DNS RMSE ratios")
    print(ratio.to_string(index=False, float_format=_g))
    return 0


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "cv": cmd_cv,
            "montecarlo": cmd_montecarlo, "forecast": cmd_forecast}


def build_parser() -> argparse.ArgumentParser:
    # common options are accepted before or after the command name
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="TOML run configuration")
    common.add_argument("--set", action="append", default=argparse.SUPPRESS, metavar="KEY=VALUE",
                        help="override a config value, e.g. fit.lambda=0.05")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--workers", type=int, default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="sparsevar", description=__doc__.split("\n")[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("--out")
        if name in ("fit", "cv", "forecast"):
            sp.add_argument("--data")
        if name == "simulate":
            sp.add_argument("--T", type=int)
        if name == "fit":
            sp.add_argument("--lambda", dest="lam", type=float)
            sp.add_argument("--penalty")
            sp.add_argument("--certify", action="store_true", default=None)
            sp.add_argument("--covariance", action="store_true", default=None)
        if name == "montecarlo":
            sp.add_argument("--replications", type=int)
            sp.add_argument("--table")
    return p


def resolve_config(args) -> cfgmod.RunConfig:
    path = getattr(args, "config", None)
    cfg = cfgmod.load(path) if path else cfgmod.RunConfig()
    for item in getattr(args, "set", []):
        cfgmod.apply_override(cfg, item)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    section = getattr(cfg, args.command)
    for key in ("out", "data", "T", "lam", "penalty", "certify", "covariance", "replications", "table"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(section, key, val)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = resolve_config(args)
    verbose = getattr(args, "verbose", 0)
    level = os.environ.get(LOG_ENV) or ("DEBUG" if verbose > 1 else "INFO" if verbose else cfg.log_level)
    logging.basicConfig(level=level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](cfg)
    except (OSError, ValueError) as exc:
        logger.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
