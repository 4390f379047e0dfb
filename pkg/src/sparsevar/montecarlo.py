"""Monte Carlo harness for the sparse VAR simulation study.

Every replication draws its data from a seed derived from
``(master_seed, T, replication)``, so all estimators in a replication see the
same sample and any single replication can be rerun in isolation.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .penalties import PenaltySpec
from .solver import FitConfig, cv_fit, coordinate_descent, oracle_fit, ols
from .var_core import NoiseSpec, VarParams, build_regression, reference_design, REFERENCE_U, simulate

logger = logging.getLogger(__name__)

PENALIZED = ("scad", "mcp", "lasso")


@dataclass(frozen=True)
class EstimatorSpec:
    name: str
    a: float | None = None

    def __post_init__(self):
        name = self.name.lower()
        if name == "l1":
            name = "lasso"
        if name not in ("oracle", "mle") + PENALIZED:
            raise ValueError(f"unknown estimator {self.name!r}")
        object.__setattr__(self, "name", name)
        if name in ("scad", "mcp"):
            # validates a
            PenaltySpec(name, 1.0, self.a)

    @property
    def penalized(self) -> bool:
        return self.name in PENALIZED

    @property
    def label(self) -> str:
        if self.name in ("scad", "mcp"):
            a = PenaltySpec(self.name, 1.0, self.a).a
            return f"{self.name.upper()}(a={a:g})"
        return {"oracle": "Oracle", "mle": "MLE", "lasso": "Lasso"}[self.name]

    def penalty(self, lam: float = 1.0) -> PenaltySpec:
        return PenaltySpec("l1" if self.name == "lasso" else self.name, lam, self.a)

    @classmethod
    def parse(cls, text: str) -> "EstimatorSpec":
        """'scad:20' or 'mcp:1.5' or 'lasso'."""
        name, _, a = text.partition(":")
        return cls(name, float(a) if a else None)

    def to_str(self) -> str:
        return f"{self.name}:{self.a:g}" if self.a is not None else self.name


def reference_estimators() -> tuple:
    return (EstimatorSpec("oracle"), EstimatorSpec("mle"), EstimatorSpec("scad", 2.5),
            EstimatorSpec("scad", 20), EstimatorSpec("mcp", 1.5), EstimatorSpec("mcp", 20),
            EstimatorSpec("lasso"))


@dataclass(frozen=True)
class ExperimentSpec:
    var_params: VarParams = field(default_factory=reference_design)
    noise_u: np.ndarray = field(default_factory=lambda: REFERENCE_U.copy())
    sample_sizes: tuple = (100, 300, 500, 1000)
    replications: int = 1000
    estimators: tuple = field(default_factory=reference_estimators)
    cv: bool = True
    cv_mode: str = "full"
    folds: int = 10
    master_seed: int = 20240101
    burn_in: int = 500
    fit: FitConfig = FitConfig()
    fixed_lambda: float | None = None
    workers: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.cv_mode not in ("full", "fixed"):
            raise ValueError("cv_mode must be 'full' or 'fixed'")
        ests = tuple(e if isinstance(e, EstimatorSpec) else EstimatorSpec.parse(str(e)) for e in self.estimators)
        object.__setattr__(self, "estimators", ests)
        if not self.cv and self.fixed_lambda is None and any(e.penalized for e in ests):
            raise ValueError("penalized estimators without CV need fixed_lambda")
        object.__setattr__(self, "sample_sizes", tuple(int(t) for t in self.sample_sizes))
        NoiseSpec(self.noise_u)

    @property
    def theta_true(self) -> np.ndarray:
        return self.var_params.theta


def replication_seeds(master_seed: int, T: int, rep: int) -> tuple[int, int]:
    """(data seed, fold seed) for one replication."""
    ss = np.random.SeedSequence([int(master_seed), int(T), int(rep)])
    s = ss.generate_state(2, dtype=np.uint64)
    return int(s[0]), int(s[1])


def _estimate(spec: ExperimentSpec, est: EstimatorSpec, X, Y, fold_seed, lam_override=None):
    if est.name == "oracle":
        return oracle_fit(X, Y, None, np.flatnonzero(spec.theta_true)).theta_hat, None
    if est.name == "mle":
        return ols(X, Y), None
    if lam_override is not None or not spec.cv:
        lam = lam_override if lam_override is not None else spec.fixed_lambda
        fit = coordinate_descent(X, Y, None, est.penalty(lam), max_iter=spec.fit.max_iter,
                                 tol=spec.fit.tol, standardize=spec.fit.standardize)
        return fit.theta_hat, lam
    fit, cv = cv_fit(X, Y, None, est.penalty(), spec.fit, spec.folds, fold_seed)
    return fit.theta_hat, cv.best_lambda


def _replicate_all(spec: ExperimentSpec, T: int, rep: int, lambdas: dict | None = None) -> dict:
    data_seed, fold_seed = replication_seeds(spec.master_seed, T, rep)
    data = simulate(spec.var_params, NoiseSpec(spec.noise_u, data_seed), T + spec.var_params.r, spec.burn_in)
    X, Y = build_regression(data, spec.var_params.r)
    out = {}
    for est in spec.estimators:
        try:
            lam = None if lambdas is None else lambdas.get(est.label)
            out[est.label] = _estimate(spec, est, X, Y, fold_seed, lam)
        except Exception as exc:  # recorded per cell, never aborts the grid
            out[est.label] = exc
    return out


def replicate_once(spec: ExperimentSpec, T: int, estimator: EstimatorSpec, seed: int):
    """Simulate one sample of length T from ``seed``, estimate, return (theta_hat, theta_true)."""
    if not isinstance(estimator, EstimatorSpec):
        estimator = EstimatorSpec.parse(str(estimator))
    data_seed, fold_seed = replication_seeds(seed, T, 0)
    data = simulate(spec.var_params, NoiseSpec(spec.noise_u, data_seed), T + spec.var_params.r, spec.burn_in)
    X, Y = build_regression(data, spec.var_params.r)
    theta_hat, _ = _estimate(spec, estimator, X, Y, fold_seed)
    return theta_hat, spec.theta_true.copy()


@dataclass
class Metrics:
    rmse: float
    stdev: float
    mssc_overall: float
    mssc_nonzero: float
    mssc_zero: float


def compute_metrics(estimates, theta_true) -> Metrics:
    """RMSE and STDEV of the L2 error, plus sign/selection success rates.

    Rates are averaged within each replication first, then across replications.
    """
    E = np.atleast_2d(np.asarray(estimates, dtype=float))
    if E.shape[0] == 0:
        raise ValueError("need at least one estimate")
    th = np.asarray(theta_true, dtype=float)
    rmse = math.sqrt(float(np.mean(np.sum((E - th) ** 2, axis=1))))
    stdev = math.sqrt(float(np.mean(np.sum((E - E.mean(axis=0)) ** 2, axis=1))))
    correct = np.sign(E) == np.sign(th)
    nz = th != 0
    overall = float(np.mean(correct.mean(axis=1)))
    nonzero = float(np.mean(correct[:, nz].mean(axis=1))) if nz.any() else float("nan")
    zero = float(np.mean((E[:, ~nz] == 0).mean(axis=1))) if (~nz).any() else float("nan")
    return Metrics(rmse, stdev, overall, nonzero, zero)


@dataclass
class CellResult:
    T: int
    estimator: str
    penalized: bool
    replications: int
    failures: int
    metrics: Metrics | None
    mean_lambda: float | None = None
    errors: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {"T": self.T, "estimator": self.estimator, "replications": self.replications,
             "failures": self.failures, "mean_lambda": self.mean_lambda, "errors": self.errors[:5]}
        if self.metrics is not None:
            m = self.metrics
            d.update(rmse=m.rmse, stdev=m.stdev)
            if self.penalized:
                d.update(mssc_overall=m.mssc_overall, mssc_nonzero=m.mssc_nonzero, mssc_zero=m.mssc_zero)
        return d


@dataclass
class ExperimentReport:
    cells: list
    sample_sizes: tuple
    estimators: tuple
    master_seed: int
    replications: int
    seconds: float = 0.0

    def cell(self, T: int, label: str) -> CellResult:
        for c in self.cells:
            if c.T == T and c.estimator == label:
                return c
        raise KeyError((T, label))

    def to_dict(self) -> dict:
        return {"master_seed": self.master_seed, "replications": self.replications,
                "sample_sizes": list(self.sample_sizes), "estimators": list(self.estimators),
                "seconds": self.seconds, "cells": [c.to_dict() for c in self.cells]}

    def render_table(self) -> str:
        """Text table: rows are T x metric, columns are estimators."""
        labels = list(self.estimators)
        width = max(10, max(len(l) for l in labels) + 2)
        head = f"{'T':>6} {'':<12}" + "".join(f"{l:>{width}}" for l in labels)
        lines = [head, "-" * len(head)]

        def fmt(c, attr, pct=False, paren=False):
            if c.metrics is None or (attr.startswith("mssc") and not c.penalized):
                return f"{'--':>{width}}"
            val = getattr(c.metrics, attr)
            s = f"{100 * val:.1f}" if pct else f"{val:.6g}"
            return f"{'(' + s + ')' if paren else s:>{width}}"

        rows = [("RMSE", "rmse", False, False), ("STDEV", "stdev", False, False),
                ("MSSC [%]", "mssc_overall", True, False), ("(nonzero)", "mssc_nonzero", True, True),
                ("(zero)", "mssc_zero", True, True)]
        for name, attr, pct, paren in rows:
            for T in self.sample_sizes:
                cells = [self.cell(T, l) for l in labels]
                lines.append(f"{T:>6} {name:<12}" + "".join(fmt(c, attr, pct, paren) for c in cells))
            lines.append("")
        return "\n".join(lines).rstrip() + "\n"


def _run_task(args):
    spec, T, rep, lambdas = args
    return _replicate_all(spec, T, rep, lambdas)


def _pilot_lambdas(spec: ExperimentSpec, T: int) -> dict:
    out = _replicate_all(spec, T, 0)
    return {label: val[1] for label, val in out.items()
            if not isinstance(val, Exception) and val[1] is not None}


def run_experiment(spec: ExperimentSpec, progress=None) -> ExperimentReport:
    """Run every (T, estimator) cell and aggregate metrics.

    With ``cv_mode="fixed"`` lam is tuned by CV on replication 0 of each T and
    reused; ``"full"`` re-tunes in every replication.
    """
    start = time.perf_counter()
    labels = tuple(e.label for e in spec.estimators)
    tasks = []
    for T in spec.sample_sizes:
        lambdas = _pilot_lambdas(spec, T) if (spec.cv and spec.cv_mode == "fixed") else None
        tasks.extend((spec, T, rep, lambdas) for rep in range(spec.replications))

    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * spec.workers))))
    else:
        results = []
        for i, t in enumerate(tasks):
            results.append(_run_task(t))
            if progress is not None:
                progress(i + 1, len(tasks))

    cells = []
    theta = spec.theta_true
    by_T: dict = {}
    for (_, T, rep, _), res in zip(tasks, results):
        by_T.setdefault(T, []).append(res)
    for T in spec.sample_sizes:
        for est in spec.estimators:
            ests, lams, errors = [], [], []
            for res in by_T[T]:
                val = res[est.label]
                if isinstance(val, Exception):
                    errors.append(f"{type(val).__name__}: {val}")
                    continue
                ests.append(val[0])
                if val[1] is not None:
                    lams.append(val[1])
            metrics = compute_metrics(ests, theta) if ests else None
            cells.append(CellResult(T, est.label, est.penalized, len(ests), len(errors), metrics,
                                    float(np.mean(lams)) if lams else None, errors))
            if errors:
                logger.warning("T=%d %s: %d failed replications", T, est.label, len(errors))
    return ExperimentReport(cells, spec.sample_sizes, labels, spec.master_seed, spec.replications,
                            time.perf_counter() - start)
