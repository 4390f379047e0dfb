"""Quasi-Gaussian VAR likelihood, score, Hessian, sandwich covariance and the
second-order local-maximum certificate.

``X`` is the (n x kr) lagged regressor matrix and ``Y`` the (n x k) response,
as returned by :func:`sparsevar.var_core.build_regression`. Averages are taken
over the n regression rows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy import linalg

from .penalties import PenaltySpec, penalty_derivative, local_concavity


class RankDeficiencyError(np.linalg.LinAlgError):
    pass


class WeightingMatrix:
    """Positive definite weighting matrix Sigma with cached inverse."""

    def __init__(self, sigma):
        sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        if sigma.shape[0] != sigma.shape[1]:
            raise ValueError("weighting matrix must be square")
        if not np.allclose(sigma, sigma.T, rtol=0, atol=1e-12 * max(1.0, np.abs(sigma).max())):
            raise ValueError("weighting matrix must be symmetric")
        sigma = 0.5 * (sigma + sigma.T)
        try:
            self.chol = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError as exc:
            raise ValueError("weighting matrix must be positive definite") from exc
        self.sigma = sigma
        self.is_identity = bool(np.array_equal(sigma, np.eye(len(sigma))))
        if self.is_identity:
            self.inv = np.eye(len(sigma))
        else:
            inv = linalg.cho_solve((self.chol, True), np.eye(len(sigma)))
            self.inv = 0.5 * (inv + inv.T)

    @classmethod
    def identity(cls, k: int) -> "WeightingMatrix":
        return cls(np.eye(k))

    @property
    def k(self) -> int:
        return self.sigma.shape[0]

    def __repr__(self):
        return f"WeightingMatrix(k={self.k}, identity={self.is_identity})"


def _as_weight(weight, k: int) -> WeightingMatrix:
    if weight is None:
        return WeightingMatrix.identity(k)
    if not isinstance(weight, WeightingMatrix):
        weight = WeightingMatrix(weight)
    if weight.k != k:
        raise ValueError(f"weighting matrix is {weight.k}x{weight.k}, data has k={k}")
    return weight


def _check(theta, X, Y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[0] != Y.shape[0]:
        raise ValueError("X and Y must have the same number of rows")
    k, m = Y.shape[1], X.shape[1]
    if theta is not None:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.size != k * m:
            raise ValueError(f"theta has length {theta.size}, expected {k * m}")
    return theta, X, Y


def coef_matrix(theta, k: int) -> np.ndarray:
    """theta = vec(B) -> B (k x kr)."""
    theta = np.asarray(theta, dtype=float)
    return theta.reshape(k, -1, order="F")


def residuals(theta, X, Y) -> np.ndarray:
    theta, X, Y = _check(theta, X, Y)
    return Y - X @ coef_matrix(theta, Y.shape[1]).T


def loglik(theta, X, Y, weight=None) -> float:
    """Average quasi-Gaussian log-likelihood (constant omitted)."""
    theta, X, Y = _check(theta, X, Y)
    w = _as_weight(weight, Y.shape[1])
    E = Y - X @ coef_matrix(theta, Y.shape[1]).T
    return -0.5 * float(np.einsum("ti,ij,tj->", E, w.inv, E)) / X.shape[0]


def score_matrix(theta, X, Y, weight=None) -> np.ndarray:
    """Per-period scores s_t = (x_t kron Sigma^-1) e_t as rows of an n x p array."""
    theta, X, Y = _check(theta, X, Y)
    w = _as_weight(weight, Y.shape[1])
    E = Y - X @ coef_matrix(theta, Y.shape[1]).T
    WE = E @ w.inv
    return (X[:, :, None] * WE[:, None, :]).reshape(X.shape[0], -1)


def score(theta, X, Y, weight=None) -> np.ndarray:
    theta, X, Y = _check(theta, X, Y)
    w = _as_weight(weight, Y.shape[1])
    E = Y - X @ coef_matrix(theta, Y.shape[1]).T
    # vec(Sigma^-1 E' X) / n
    return (w.inv @ E.T @ X).reshape(-1, order="F") / X.shape[0]


class KroneckerHessian:
    """H = -(X'X / n) kron Sigma^-1, kept in factored form."""

    def __init__(self, gram: np.ndarray, omega: np.ndarray):
        self.gram = gram
        self.omega = omega

    @property
    def shape(self):
        p = self.gram.shape[0] * self.omega.shape[0]
        return (p, p)

    def block(self, rows, cols=None) -> np.ndarray:
        rows = np.asarray(rows, dtype=int)
        cols = rows if cols is None else np.asarray(cols, dtype=int)
        k = self.omega.shape[0]
        rc, ri = np.divmod(rows, k)
        cc, ci = np.divmod(cols, k)
        return -self.gram[np.ix_(rc, cc)] * self.omega[np.ix_(ri, ci)]

    def dense(self) -> np.ndarray:
        return -np.kron(self.gram, self.omega)

    def __array__(self, dtype=None, copy=None):
        out = self.dense()
        return out if dtype is None else out.astype(dtype)


def hessian(X, Y_or_k, weight=None) -> KroneckerHessian:
    """Hessian of the log-likelihood; it does not depend on theta.

    The second argument is either Y or the dimension k.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    k = int(Y_or_k) if np.ndim(Y_or_k) == 0 else np.atleast_2d(Y_or_k).shape[1]
    w = _as_weight(weight, k)
    return KroneckerHessian(X.T @ X / X.shape[0], w.inv)


def bartlett_bandwidth(n: int) -> int:
    return int(math.floor(4.0 * (n / 100.0) ** (2.0 / 9.0)))


def _long_run_variance(S: np.ndarray, kernel: str, bandwidth: int | None) -> np.ndarray:
    n = S.shape[0]
    out = S.T @ S / n
    if kernel == "outer":
        return out
    if kernel != "bartlett":
        raise ValueError(f"unknown kernel {kernel!r}")
    L = bartlett_bandwidth(n) if bandwidth is None else int(bandwidth)
    for lag in range(1, min(L, n - 1) + 1):
        g = S[lag:].T @ S[:-lag] / n
        out += (1.0 - lag / (L + 1.0)) * (g + g.T)
    return out


def sandwich_covariance(theta_hat, support, X, Y, weight=None, kernel: str = "outer",
                        bandwidth: int | None = None) -> np.ndarray:
    """J^-1 I J^-1 on the support: the estimated variance of sqrt(n)(theta_hat - theta0).

    ``kernel="outer"`` uses the average outer product of per-period scores;
    ``kernel="bartlett"`` adds Newey-West autocovariance terms.
    """
    theta_hat, X, Y = _check(theta_hat, X, Y)
    support = np.asarray(sorted(support), dtype=int)
    if support.size == 0:
        raise ValueError("support must be nonempty")
    H = hessian(X, Y, weight)
    J = -H.block(support)
    S = score_matrix(theta_hat, X, Y, weight)[:, support]
    I = _long_run_variance(S, kernel, bandwidth)
    try:
        c, low = linalg.cho_factor(J)
    except linalg.LinAlgError as exc:
        raise RankDeficiencyError("restricted Hessian is singular") from exc
    if np.linalg.cond(J) > 1e12:
        raise RankDeficiencyError("restricted Hessian is singular")
    A = linalg.cho_solve((c, low), I)
    V = linalg.cho_solve((c, low), A.T)
    return 0.5 * (V + V.T)


@dataclass(frozen=True)
class CertificateReport:
    stationarity_gap: float
    inactive_margin: float
    eigen_margin: float
    passed: bool
    tol: float = 1e-6

    def to_dict(self) -> dict:
        d = asdict(self)
        for key, val in d.items():
            if isinstance(val, float) and not math.isfinite(val):
                d[key] = None
        return d


def certify_local_max(theta_hat, spec: PenaltySpec, X, Y, weight=None, tol: float = 1e-6) -> CertificateReport:
    """Check the sufficient conditions for a strict local maximum of
    ``L_T(theta) - sum_j p_lam(|theta_j|)``.

    1. stationarity on the support, up to ``tol``
    2. inactive scores strictly below lam * rho'(0+) = p'(0+)
    3. lambda_min(-H_support) strictly above lam * kappa(rho; theta_support)
    """
    theta_hat, X, Y = _check(theta_hat, X, Y)
    S = score(theta_hat, X, Y, weight)
    active = np.flatnonzero(theta_hat != 0)
    inactive = np.flatnonzero(theta_hat == 0)
    p0 = penalty_derivative(spec, 0.0)

    if active.size:
        th = theta_hat[active]
        gap = float(np.max(np.abs(S[active] - penalty_derivative(spec, np.abs(th)) * np.sign(th))))
        H = hessian(X, Y, weight)
        lam_min = float(np.linalg.eigvalsh(-H.block(active))[0])
        eigen_margin = lam_min - spec.lam * local_concavity(spec, th)
    else:
        gap = 0.0
        eigen_margin = math.inf
    inactive_margin = p0 - (float(np.max(np.abs(S[inactive]))) if inactive.size else 0.0)
    passed = gap <= tol and inactive_margin > 0 and eigen_margin > 0
    return CertificateReport(gap, inactive_margin, eigen_margin, bool(passed), tol)
