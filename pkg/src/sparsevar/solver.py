"""Penalized quasi-likelihood estimation of VAR coefficients by coordinate descent.

The estimator maximises ``L_T(theta) - sum_j p_lam(|theta_j|)``, i.e. minimises
``0.5 vec(B)'(G kron Omega)vec(B) - vec(B)'vec(Omega C) + penalty`` with
``G = X'X/n``, ``C = Y'X/n`` and ``Omega = Sigma^-1``. With standardisation on
(the default) every regressor column is rescaled to unit mean square before
fitting and ``lam`` refers to that scale; returned coefficients are always on
the original scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import linalg

from . import _cd
from .penalties import PenaltySpec, penalty_sum, penalty_derivative
from .qml import (
    CertificateReport, RankDeficiencyError, WeightingMatrix, _as_weight, certify_local_max, loglik,
)
from .var_core import build_regression


class NumericError(ArithmeticError):
    pass


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class FitConfig:
    lambda_grid: tuple | None = None
    n_lambda: int = 100
    lambda_min_ratio: float = 1e-3
    max_iter: int = 10000
    tol: float = 1e-7
    standardize: bool = True
    contiguous_folds: bool = False

    def __post_init__(self):
        if self.lambda_grid is not None:
            grid = tuple(float(x) for x in self.lambda_grid)
            if any(g <= 0 for g in grid) or any(b >= a for a, b in zip(grid, grid[1:])):
                raise ConfigurationError("lambda_grid must be positive and strictly descending")
            object.__setattr__(self, "lambda_grid", grid)
        if not self.tol > 0:
            raise ConfigurationError("tol must be positive")
        if self.max_iter < 1 or self.n_lambda < 1:
            raise ConfigurationError("max_iter and n_lambda must be positive")
        if not 0 < self.lambda_min_ratio < 1:
            raise ConfigurationError("lambda_min_ratio must lie in (0, 1)")


@dataclass
class FitResult:
    theta_hat: np.ndarray
    support: tuple
    lam: float
    n_iter: int
    converged: bool
    objective: float
    certificate: CertificateReport | None = None
    penalty: str | None = None
    a: float | None = None

    def to_dict(self) -> dict:
        d = {
            "theta": {str(j): float(self.theta_hat[j]) for j in self.support},
            "p": int(self.theta_hat.size),
            "lambda": float(self.lam),
            "support": [int(j) for j in self.support],
            "n_iter": int(self.n_iter),
            "converged": bool(self.converged),
            "objective": float(self.objective),
        }
        if self.penalty is not None:
            d["penalty"] = self.penalty
            if self.a is not None:
                d["a"] = float(self.a)
        if self.certificate is not None:
            d["certificate"] = self.certificate.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        theta = np.zeros(int(d["p"]))
        for j, val in d["theta"].items():
            theta[int(j)] = val
        return cls(theta, tuple(d["support"]), d["lambda"], d["n_iter"], d["converged"],
                   d["objective"], None, d.get("penalty"), d.get("a"))


class _Problem:
    """Sufficient statistics of one (X, Y, Sigma) problem, possibly standardised."""

    def __init__(self, X, Y, weight=None, standardize: bool = True):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if X.shape[0] != Y.shape[0]:
            raise ValueError("X and Y must have the same number of rows")
        if X.shape[0] < 1:
            raise ValueError("need at least one regression row")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise NumericError("data contain non-finite values")
        self.n = X.shape[0]
        self.k = Y.shape[1]
        self.m = X.shape[1]
        self.weight = _as_weight(weight, self.k)
        self.omega = np.ascontiguousarray(self.weight.inv)
        if standardize:
            s = np.sqrt(np.mean(X * X, axis=0))
            s[s == 0] = 1.0
        else:
            s = np.ones(self.m)
        self.scale = s
        Xs = X / s
        self.G = np.ascontiguousarray(Xs.T @ Xs / self.n)
        self.C = np.ascontiguousarray(Y.T @ Xs / self.n)
        self.Syy = Y.T @ Y / self.n

    def theta_scale(self) -> np.ndarray:
        return np.repeat(self.scale, self.k)

    def to_theta(self, Bs: np.ndarray) -> np.ndarray:
        return (Bs / self.scale).reshape(-1, order="F")

    def to_std(self, theta: np.ndarray) -> np.ndarray:
        B = np.asarray(theta, dtype=float).reshape(self.k, self.m, order="F")
        return np.ascontiguousarray(B * self.scale)

    def loglik_std(self, Bs: np.ndarray) -> float:
        M = self.Syy - Bs @ self.C.T - self.C @ Bs.T + Bs @ self.G @ Bs.T
        return -0.5 * float(np.sum(self.omega * M))

    def lambda_max(self) -> float:
        return float(np.max(np.abs(self.omega @ self.C))) if self.C.size else 0.0

    def solve(self, spec: PenaltySpec | None, B0, max_iter, tol):
        if spec is None:
            kind, lam, a = 0, 0.0, 1.0
        else:
            kind, lam, a = spec.code, spec.lam, spec.a or 1.0
        return _cd.cd_solve(self.G, self.C, self.omega, np.ascontiguousarray(B0, dtype=float),
                            kind, lam, a, int(max_iter), float(tol))

    def result(self, Bs, spec, n_iter, converged, X=None, Y=None, certify=False) -> FitResult:
        theta = self.to_theta(Bs)
        theta_std = Bs.reshape(-1, order="F")
        pen = penalty_sum(spec, theta_std) if spec is not None else 0.0
        obj = self.loglik_std(Bs) - pen
        cert = None
        if certify and spec is not None:
            cert = certify_local_max(theta_std, spec, X / self.scale, Y, self.weight)
        support = tuple(int(j) for j in np.flatnonzero(theta))
        return FitResult(theta, support, spec.lam if spec is not None else 0.0, int(n_iter),
                         bool(converged), obj, cert,
                         spec.kind if spec is not None else None,
                         spec.a if spec is not None else None)


def univariate_update(z: float, v: float, spec: PenaltySpec) -> float:
    """argmin over t of 0.5 v (t - z)^2 + p_lam(|t|)."""
    if not v > 0:
        raise ValueError("v must be positive")
    a = spec.a or 1.0
    return float(_cd.univariate(float(z), float(v), spec.code, spec.lam, a))


def lambda_max(X, Y, weight=None, standardize: bool = True) -> float:
    """Smallest lam at which theta = 0 satisfies the inactive-score condition.

    rho'(0+) = 1 for every supported penalty, so this is ||S_T(0)||_inf.
    """
    return _Problem(X, Y, weight, standardize).lambda_max()


def coordinate_descent(X, Y, weight=None, spec: PenaltySpec | None = None, init=None, *,
                       max_iter: int = 10000, tol: float = 1e-7, standardize: bool = True,
                       certify: bool = False) -> FitResult:
    """Cyclic coordinate descent for one penalty level.

    ``spec=None`` fits the unpenalized problem. ``init`` is a warm start on the
    original coefficient scale. Non-convergence is reported through
    ``converged=False`` rather than raised.
    """
    prob = _Problem(X, Y, weight, standardize)
    B0 = np.zeros((prob.k, prob.m)) if init is None else prob.to_std(init)
    Bs, n_iter, conv = prob.solve(spec, B0, max_iter, tol)
    return prob.result(Bs, spec, n_iter, conv, np.asarray(X, float), np.asarray(Y, float), certify)


def lambda_grid(lmax: float, config: FitConfig) -> np.ndarray:
    if config.lambda_grid is not None:
        return np.asarray(config.lambda_grid)
    if lmax <= 0:
        return np.array([0.0])[:0]
    if config.n_lambda == 1:
        return np.array([lmax])
    return np.exp(np.linspace(math.log(lmax), math.log(lmax * config.lambda_min_ratio), config.n_lambda))


def _path(prob: _Problem, base_spec: PenaltySpec, grid, config: FitConfig):
    B = np.zeros((prob.k, prob.m))
    for lam in grid:
        spec = base_spec.with_lambda(lam)
        B, n_iter, conv = prob.solve(spec, B, config.max_iter, config.tol)
        yield spec, B, n_iter, conv


def fit_path(X, Y, weight=None, base_spec: PenaltySpec | None = None, config: FitConfig = FitConfig(),
             certify: bool = False) -> list[FitResult]:
    """Fits along a descending lam grid, each warm-started from the previous fit."""
    base_spec = base_spec or PenaltySpec("l1", 1.0)
    prob = _Problem(X, Y, weight, config.standardize)
    grid = lambda_grid(prob.lambda_max(), config)
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    return [prob.result(B, spec, n_iter, conv, X, Y, certify)
            for spec, B, n_iter, conv in _path(prob, base_spec, grid, config)]


@dataclass
class CVCurve:
    lambdas: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    folds: int

    def to_dict(self) -> dict:
        return {"lambdas": self.lambdas.tolist(), "mean": self.mean.tolist(),
                "se": self.se.tolist(), "folds": self.folds}


class CVResult(NamedTuple):
    best_lambda: float
    cv_curve: CVCurve


def fold_ids(n: int, folds: int, seed, contiguous: bool = False) -> np.ndarray:
    if folds < 2:
        raise ConfigurationError("need at least 2 folds")
    if folds > n:
        raise ConfigurationError(f"{folds} folds leave some fold without rows (n={n})")
    base = np.arange(n) % folds
    if contiguous:
        return np.arange(n) * folds // n
    return np.random.default_rng(seed).permutation(base)


def _heldout_loss(Bs_theta: np.ndarray, X, Y, omega) -> np.ndarray:
    E = Y - X @ Bs_theta.T
    return 0.5 * np.einsum("ti,ij,tj->t", E, omega, E)


def cv_fit(X, Y, weight=None, base_spec: PenaltySpec | None = None, config: FitConfig = FitConfig(),
           folds: int = 10, seed=0, certify: bool = False) -> tuple[FitResult, CVResult]:
    """K-fold cross-validation over a lam grid, then the full-data fit at the best lam.

    The grid is built from the full data. Each fold's path is trained on the
    remaining rows (with its own standardisation); the held-out loss is
    ``0.5 e' Sigma^-1 e`` averaged over all rows.
    """
    base_spec = base_spec or PenaltySpec("l1", 1.0)
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    n = X.shape[0]
    full = _Problem(X, Y, weight, config.standardize)
    grid = lambda_grid(full.lambda_max(), config)
    if grid.size == 0:
        raise ConfigurationError("empty lambda grid (the score at zero vanishes)")
    ids = fold_ids(n, folds, seed, config.contiguous_folds)
    losses = np.zeros((folds, grid.size))
    counts = np.zeros(folds)
    for f in range(folds):
        test = ids == f
        train = ~test
        prob = _Problem(X[train], Y[train], full.weight, config.standardize)
        for idx, (_, Bs, _, _) in enumerate(_path(prob, base_spec, grid, config)):
            B = Bs / prob.scale
            losses[f, idx] = np.sum(_heldout_loss(B, X[test], Y[test], full.omega))
        counts[f] = test.sum()
    mean = losses.sum(axis=0) / n
    per_fold = losses / counts[:, None]
    se = per_fold.std(axis=0, ddof=1) / math.sqrt(folds)
    best = int(np.argmin(mean))
    curve = CVCurve(grid, mean, se, folds)

    fit = None
    for j, (spec, Bs, n_iter, conv) in enumerate(_path(full, base_spec, grid[:best + 1], config)):
        if j == best:
            fit = full.result(Bs, spec, n_iter, conv, X, Y, certify)
    return fit, CVResult(float(grid[best]), curve)


def cross_validate(data, r: int, weight=None, base_spec: PenaltySpec | None = None,
                   config: FitConfig = FitConfig(), folds: int = 10, seed=0) -> CVResult:
    X, Y = build_regression(data, r)
    return cv_fit(X, Y, weight, base_spec, config, folds, seed)[1]


def oracle_fit(X, Y, weight=None, support: Sequence[int] = ()) -> FitResult:
    """Unpenalized weighted least squares on the given coordinates, zero elsewhere."""
    X = np.atleast_2d(np.asarray(X, float))
    Y = np.atleast_2d(np.asarray(Y, float))
    n, m = X.shape
    k = Y.shape[1]
    w = _as_weight(weight, k)
    support = np.asarray(sorted(set(int(j) for j in support)), dtype=int)
    theta = np.zeros(k * m)
    if support.size:
        if support[0] < 0 or support[-1] >= k * m:
            raise IndexError("support index out of range")
        G = X.T @ X / n
        b = (w.inv @ Y.T @ X / n).reshape(-1, order="F")[support]
        c, i = np.divmod(support, k)
        H = G[np.ix_(c, c)] * w.inv[np.ix_(i, i)]
        try:
            cf = linalg.cho_factor(H)
        except linalg.LinAlgError as exc:
            raise RankDeficiencyError("restricted design is rank deficient") from exc
        if np.linalg.cond(H) > 1e12:
            raise RankDeficiencyError("restricted design is rank deficient")
        theta[support] = linalg.cho_solve(cf, b)
    obj = loglik(theta, X, Y, w)
    return FitResult(theta, tuple(int(j) for j in np.flatnonzero(theta)), 0.0, 0, True, obj)


def ols(X, Y) -> np.ndarray:
    """Unrestricted least squares theta = vec(B); identical for every weighting."""
    B = np.linalg.lstsq(np.asarray(X, float), np.asarray(Y, float), rcond=None)[0].T
    return B.reshape(-1, order="F")
