"""VAR(r) representation, stability, simulation and regression matrices.

Coefficient layout used throughout the package: with ``B = [Phi_1 ... Phi_r]``
(k x kr) the model reads ``y_t = B x_t + e_t`` where
``x_t = (y_{t-1}', ..., y_{t-r}')'``, and ``theta = vec(B)`` in column-major
order. Index ``j`` of theta therefore maps to

    equation  i   = j % k
    regressor c   = j // k      (lag = c // k + 1, variable = c % k)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd


class InsufficientDataError(ValueError):
    pass


class UnstableModelError(ValueError):
    pass


@dataclass(frozen=True)
class VarParams:
    phi: tuple

    def __post_init__(self):
        mats = tuple(np.array(m, dtype=float) for m in self.phi)
        if not mats:
            raise ValueError("need at least one lag matrix")
        k = mats[0].shape[0]
        for m in mats:
            if m.shape != (k, k):
                raise ValueError("all lag matrices must be k x k")
            m.setflags(write=False)
        object.__setattr__(self, "phi", mats)

    @property
    def k(self) -> int:
        return self.phi[0].shape[0]

    @property
    def r(self) -> int:
        return len(self.phi)

    @property
    def p(self) -> int:
        return self.k * self.k * self.r

    @property
    def coef(self) -> np.ndarray:
        """B = [Phi_1 ... Phi_r], k x kr."""
        return np.hstack(self.phi)

    @property
    def theta(self) -> np.ndarray:
        return self.coef.reshape(-1, order="F")

    @classmethod
    def from_theta(cls, theta, k: int, r: int) -> "VarParams":
        B = np.asarray(theta, dtype=float).reshape(k, k * r, order="F")
        return cls(tuple(B[:, l * k:(l + 1) * k] for l in range(r)))

    @classmethod
    def from_coef(cls, B, r: int) -> "VarParams":
        B = np.asarray(B, dtype=float)
        k = B.shape[0]
        return cls(tuple(B[:, l * k:(l + 1) * k] for l in range(r)))


def theta_index(j: int, k: int) -> tuple[int, int, int]:
    """Map a theta index to (equation, lag, variable), lag starting at 1."""
    c, i = divmod(j, k)
    lag, var = divmod(c, k)
    return i, lag + 1, var


@dataclass(frozen=True)
class NoiseSpec:
    factor_u: np.ndarray
    seed: int = 0

    def __post_init__(self):
        U = np.array(self.factor_u, dtype=float)
        if U.ndim != 2 or U.shape[0] != U.shape[1]:
            raise ValueError("factor_u must be square")
        try:
            np.linalg.cholesky(U @ U.T)
        except np.linalg.LinAlgError as exc:
            raise ValueError("U U' is not positive definite") from exc
        U.setflags(write=False)
        object.__setattr__(self, "factor_u", U)

    @property
    def sigma(self) -> np.ndarray:
        return self.factor_u @ self.factor_u.T


@dataclass
class TimeSeriesData:
    values: np.ndarray
    dates: np.ndarray | None = None
    names: list[str] | None = None

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.names is None:
            self.names = [f"y{i + 1}" for i in range(self.values.shape[1])]
        if len(self.names) != self.values.shape[1]:
            raise ValueError("names must match the number of columns")
        if self.dates is not None:
            self.dates = np.asarray(self.dates, dtype="datetime64[D]")
            if len(self.dates) != len(self.values):
                raise ValueError("dates must match the number of rows")

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]

    def to_csv(self, path) -> None:
        df = pd.DataFrame(self.values, columns=self.names)
        if self.dates is not None:
            df.insert(0, "date", pd.to_datetime(self.dates).strftime("%Y-%m-%d"))
        df.to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def from_csv(cls, path) -> "TimeSeriesData":
        df = pd.read_csv(path, float_precision="round_trip")
        dates = None
        first = df.columns[0]
        if str(first).lower() == "date" or df[first].dtype == object:
            dates = pd.to_datetime(df[first]).to_numpy().astype("datetime64[D]")
            df = df.drop(columns=first)
        return cls(df.to_numpy(dtype=float), dates, [str(c) for c in df.columns])


def companion_matrix(params: VarParams) -> np.ndarray:
    k, r = params.k, params.r
    top = params.coef
    if r == 1:
        return top.copy()
    lower = np.hstack([np.eye(k * (r - 1)), np.zeros((k * (r - 1), k))])
    return np.vstack([top, lower])


def spectral_radius(params: VarParams) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(companion_matrix(params)))))


def is_stable(params: VarParams, tol: float = 1e-10) -> bool:
    return spectral_radius(params) < 1.0 - tol


def simulate(params: VarParams, noise: NoiseSpec, T: int, burn_in: int = 500) -> TimeSeriesData:
    """Simulate ``T`` observations of a Gaussian VAR started at zero.

    The first ``burn_in`` draws are discarded. The same seed always gives the
    same output.
    """
    if not is_stable(params):
        raise UnstableModelError("VAR parameters are not stable")
    if T < 0 or burn_in < 0:
        raise ValueError("T and burn_in must be nonnegative")
    k, r = params.k, params.r
    if noise.factor_u.shape != (k, k):
        raise ValueError("noise factor dimension does not match the VAR")
    rng = np.random.default_rng(noise.seed)
    n = T + burn_in
    eps = rng.standard_normal((n, k)) @ noise.factor_u.T
    y = np.zeros((n + r, k))
    B = params.coef
    for t in range(n):
        # lags most recent first
        x = y[t:t + r][::-1].reshape(-1)
        y[t + r] = B @ x + eps[t]
    return TimeSeriesData(y[r + burn_in:])


def build_regression(data, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (X, Y) with row t of X = (y_{t+r-1}', ..., y_t')' and Y[t] = y_{t+r}."""
    values = data.values if isinstance(data, TimeSeriesData) else np.atleast_2d(np.asarray(data, dtype=float))
    T, k = values.shape
    if r < 1:
        raise ValueError("r must be positive")
    if T <= r:
        raise InsufficientDataError(f"need T > r, got T={T}, r={r}")
    n = T - r
    X = np.empty((n, k * r))
    for lag in range(1, r + 1):
        X[:, (lag - 1) * k:lag * k] = values[r - lag:T - lag]
    Y = values[r:].copy()
    return X, Y


def lagged_design(values: np.ndarray, r: int) -> np.ndarray:
    """Regressor row for forecasting from the last r observations."""
    return np.asarray(values[-r:][::-1], dtype=float).reshape(-1)


# The simulation design used in the Monte Carlo study: k = 8, r = 2.
REFERENCE_PHI1 = np.array([
    [.7, .1, 0, 0, 0, 0, 0, 0],
    [0, .4, .1, 0, 0, 0, 0, 0],
    [.6, -.2, .6, 0, 0, 0, 0, 0],
    [0, 0, -.2, .4, 0, 0, 0, 0],
    [0, 0, 0, 0, .3, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0],
])
REFERENCE_PHI2 = np.array([
    [-.2, 0, 0, 0, 0, 0, 0, 0],
    [0, .2, .1, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, -.3, 0, 0, 0, 0],
    [0, 0, 0, 0, -.4, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0],
])
REFERENCE_U = np.array([
    [.5, .1, 0, 0, 0, 0, 0, 0],
    [0, .3, 0, 0, 0, 0, 0, 0],
    [0, 0, .9, 0, 0, 0, 0, 0],
    [0, 0, .2, .4, 0, 0, 0, 0],
    [0, 0, 0, -.2, .3, 0, 0, 0],
    [0, 0, 0, 0, 0, .3, 0, 0],
    [0, 0, 0, 0, 0, 0, .3, 0],
    [0, 0, 0, 0, 0, 0, 0, .3],
])


def reference_design() -> VarParams:
    return VarParams((REFERENCE_PHI1, REFERENCE_PHI2))


def reference_noise(seed: int = 0) -> NoiseSpec:
    return NoiseSpec(REFERENCE_U, seed)
