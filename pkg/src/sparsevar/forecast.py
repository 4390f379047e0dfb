"""Yield-curve forecasting: sparse VAR on yield differences versus dynamic Nelson-Siegel.

Dates are monthly (``datetime64[M]``). Maturities are in months.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.optimize import minimize_scalar

from .penalties import PenaltySpec
from .solver import coordinate_descent
from .var_core import NoiseSpec, VarParams, build_regression, is_stable, lagged_design, simulate

DEFAULT_MATURITIES = (3, 6, 12, 24, 36, 60, 84, 120)


class InsufficientHistoryError(ValueError):
    pass


@dataclass
class YieldDataset:
    dates: np.ndarray
    maturities: tuple
    yields: np.ndarray

    def __post_init__(self):
        self.dates = np.asarray(self.dates, dtype="datetime64[M]")
        self.maturities = tuple(int(m) if float(m).is_integer() else float(m) for m in self.maturities)
        self.yields = np.asarray(self.yields, dtype=float)
        if self.yields.shape != (len(self.dates), len(self.maturities)):
            raise ValueError("yields must be (number of dates) x (number of maturities)")
        if len(self.dates) > 1 and np.any(np.diff(self.dates).astype(int) <= 0):
            raise ValueError("dates must be strictly increasing")
        if any(b <= a for a, b in zip(self.maturities, self.maturities[1:])):
            raise ValueError("maturities must be strictly increasing")
        if not np.all(np.isfinite(self.yields)):
            raise ValueError("yields contain missing or non-finite cells")

    @property
    def T(self) -> int:
        return len(self.dates)

    def index_of(self, date) -> int:
        d = np.datetime64(date, "M")
        idx = np.flatnonzero(self.dates == d)
        if idx.size == 0:
            raise KeyError(f"{date} is not in the dataset")
        return int(idx[0])

    def to_csv(self, path) -> None:
        df = pd.DataFrame(self.yields, columns=[str(m) for m in self.maturities])
        df.insert(0, "date", [str(d) + "-01" for d in self.dates])
        df.to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def from_csv(cls, path) -> "YieldDataset":
        df = pd.read_csv(path, float_precision="round_trip")
        dates = pd.to_datetime(df.iloc[:, 0]).to_numpy().astype("datetime64[M]")
        mats = [float(c) for c in df.columns[1:]]
        return cls(dates, tuple(mats), df.iloc[:, 1:].to_numpy(dtype=float))


@dataclass
class DnsFactors:
    beta: np.ndarray  # T x 3: level, slope, curvature
    eta: np.ndarray

    def __post_init__(self):
        self.beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        self.eta = np.asarray(self.eta, dtype=float)
        if np.any(self.eta <= 0):
            raise ValueError("eta must be positive")

    @property
    def beta1(self):
        return self.beta[:, 0]

    @property
    def beta2(self):
        return self.beta[:, 1]

    @property
    def beta3(self):
        return self.beta[:, 2]


def _slope_loading(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x / 2.0, -np.expm1(-safe) / safe)


def dns_loadings(eta: float, tau) -> np.ndarray:
    """Level, slope and curvature loadings; shape (3,) or (len(tau), 3)."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(tau_arr <= 0):
        raise ValueError("tau must be positive")
    x = eta * tau_arr
    slope = _slope_loading(x)
    out = np.stack([np.ones_like(x), slope, slope - np.exp(-x)], axis=-1)
    return out


def _curvature(x: float) -> float:
    return float(_slope_loading(x) - math.exp(-x))


def _curvature_argmax() -> float:
    res = minimize_scalar(lambda x: -_curvature(x), bracket=(0.5, 1.8, 5.0), method="brent",
                          options={"xtol": 1e-12})
    return float(res.x)


_XSTAR = None


def dns_select_eta(tau_medium: float = 30.0) -> float:
    """eta maximising the curvature loading at maturity ``tau_medium``.

    The loading depends on eta * tau only, so the maximiser is x* / tau_medium
    where x* maximises the curvature loading in its argument.
    """
    global _XSTAR
    if not tau_medium > 0:
        raise ValueError("tau_medium must be positive")
    if _XSTAR is None:
        _XSTAR = _curvature_argmax()
    return _XSTAR / float(tau_medium)


def dns_fit(dataset: YieldDataset, tau_medium: float = 30.0, eta: float | None = None) -> DnsFactors:
    """Cross-sectional least squares of each period's curve on the three loadings."""
    if len(dataset.maturities) < 3:
        raise ValueError("need at least three maturities")
    eta = dns_select_eta(tau_medium) if eta is None else float(eta)
    L = dns_loadings(eta, dataset.maturities)
    if np.linalg.matrix_rank(L) < 3 or np.linalg.cond(L) > 1e10:
        raise np.linalg.LinAlgError("loadings are collinear for these maturities")
    beta = np.linalg.lstsq(L, dataset.yields.T, rcond=None)[0].T
    return DnsFactors(beta, np.full(dataset.T, eta))


def dns_forecast(factors: DnsFactors, h: int, upto: int | None = None) -> np.ndarray:
    """Direct h-step forecast of the three factors from AR(1)-at-lag-h regressions.

    Uses factor observations ``0..upto`` (default: all).
    """
    beta = factors.beta if upto is None else factors.beta[:upto + 1]
    n = beta.shape[0]
    if h < 1:
        raise ValueError("h must be positive")
    if n < h + 2:
        raise InsufficientHistoryError(f"need at least {h + 2} factor observations, have {n}")
    out = np.empty(3)
    for i in range(3):
        y = beta[h:, i]
        x = beta[:-h, i]
        Z = np.column_stack([np.ones_like(x), x])
        coef = np.linalg.lstsq(Z, y, rcond=None)[0]
        out[i] = coef[0] + coef[1] * beta[-1, i]
    return out


def dns_yield_forecast(factors: DnsFactors, h: int, maturities, upto: int | None = None) -> np.ndarray:
    last = -1 if upto is None else upto
    return dns_loadings(factors.eta[last], maturities) @ dns_forecast(factors, h, upto)


def svar_lambda(m: int, T: int) -> float:
    """Fixed penalty level (m T)^-0.4 / 4."""
    return (m * T) ** -0.4 / 4.0


def svar_fit(levels: np.ndarray, r: int = 12, spec: PenaltySpec | None = None, lam: float | None = None,
             **fit_kw):
    """Penalized VAR(r) on first differences of ``levels`` (T x m)."""
    levels = np.asarray(levels, dtype=float)
    T, m = levels.shape
    if T <= r + 1:
        raise InsufficientHistoryError(f"need more than r + 1 = {r + 1} observations, have {T}")
    if lam is None:
        lam = spec.lam if spec is not None else svar_lambda(m, T)
    spec = (spec or PenaltySpec("scad", lam)).with_lambda(lam)
    X, Y = build_regression(np.diff(levels, axis=0), r)
    return coordinate_descent(X, Y, None, spec, **fit_kw)


def iterate_var(coef: np.ndarray, history: np.ndarray, r: int, h_max: int) -> np.ndarray:
    """Feed predictions back as lags; returns h_max x k predicted values."""
    hist = list(np.asarray(history[-r:], dtype=float))
    out = np.empty((h_max, coef.shape[0]))
    for h in range(h_max):
        x = lagged_design(np.asarray(hist[-r:]), r)
        out[h] = coef @ x
        hist.append(out[h])
    return out


def svar_forecast(dataset, r: int = 12, spec: PenaltySpec | None = None, h_max: int = 12,
                  lam: float | None = None, upto: int | None = None, **fit_kw) -> np.ndarray:
    """Forecast yields 1..h_max months past observation ``upto`` (default: the last).

    Returns an (h_max x m) array whose row h-1 is the h-step forecast.
    """
    levels = dataset.yields if isinstance(dataset, YieldDataset) else np.asarray(dataset, dtype=float)
    if upto is not None:
        levels = levels[:upto + 1]
    fit = svar_fit(levels, r, spec, lam, **fit_kw)
    k = levels.shape[1]
    coef = fit.theta_hat.reshape(k, k * r, order="F")
    diffs = np.diff(levels, axis=0)
    pred = iterate_var(coef, diffs, r, h_max)
    return levels[-1] + np.cumsum(pred, axis=0)


@dataclass
class ForecastReport:
    horizons: tuple
    maturities: tuple
    rmse: dict  # method -> (len(horizons) x m) array
    counts: dict  # h -> number of forecasts
    origins: tuple = ()

    def ratio(self, num: str = "sVAR", den: str = "DNS") -> np.ndarray:
        return self.rmse[num] / self.rmse[den]

    def to_dict(self) -> dict:
        return {
            "horizons": list(self.horizons),
            "maturities": list(self.maturities),
            "counts": {str(h): c for h, c in self.counts.items()},
            "rmse": {k: v.tolist() for k, v in self.rmse.items()},
            "ratio_sVAR_DNS": self.ratio("sVAR", "DNS").tolist() if "DNS" in self.rmse else None,
            "ratio_sVAR_RW": self.ratio("sVAR", "RW").tolist() if "RW" in self.rmse else None,
            "first_origin": self.origins[0] if self.origins else None,
            "last_origin": self.origins[-1] if self.origins else None,
        }

    def rmse_table(self) -> pd.DataFrame:
        rows = []
        for method, arr in self.rmse.items():
            for hi, h in enumerate(self.horizons):
                rows.append([method, h] + list(arr[hi]))
        return pd.DataFrame(rows, columns=["method", "h"] + [str(m) for m in self.maturities])

    def ratio_table(self, num: str = "sVAR", den: str = "DNS") -> pd.DataFrame:
        arr = self.ratio(num, den)
        df = pd.DataFrame(arr, columns=[str(m) for m in self.maturities])
        df.insert(0, "h", list(self.horizons))
        return df


def rolling_evaluation(dataset: YieldDataset, start, end, horizons: Sequence[int] = (1, 3, 6, 12),
                       tau_medium: float = 30.0, r: int = 12, spec: PenaltySpec | None = None,
                       lam: float | None = None, methods: Sequence[str] = ("sVAR", "DNS", "RW"),
                       **fit_kw) -> ForecastReport:
    """Expanding-window out-of-sample comparison.

    Forecasts are made at every origin from ``start`` up to ``end - h`` using
    all data up to and including the origin, and scored against the realised
    yield at ``origin + h``; each h thus gets ``months(end - start) - h + 1``
    forecasts. The sVAR penalty level is recomputed from the window length at
    every origin unless ``lam`` is given.
    """
    horizons = tuple(sorted(int(h) for h in horizons))
    i0, i1 = dataset.index_of(start), dataset.index_of(end)
    if i1 - i0 < horizons[0]:
        raise ValueError("evaluation window shorter than the smallest horizon")
    h_max = horizons[-1]
    factors = dns_fit(dataset, tau_medium) if "DNS" in methods else None
    sq = {mth: {h: [] for h in horizons} for mth in methods}
    origins = []
    for o in range(i0, i1 - horizons[0] + 1):
        origins.append(str(dataset.dates[o]))
        feasible = [h for h in horizons if o + h <= i1]
        preds = {}
        if "sVAR" in methods:
            preds["sVAR"] = svar_forecast(dataset, r, spec, h_max, lam, upto=o, **fit_kw)
        for h in feasible:
            actual = dataset.yields[o + h]
            if "sVAR" in methods:
                sq["sVAR"][h].append((preds["sVAR"][h - 1] - actual) ** 2)
            if "DNS" in methods:
                f = dns_yield_forecast(factors, h, dataset.maturities, upto=o)
                sq["DNS"][h].append((f - actual) ** 2)
            if "RW" in methods:
                sq["RW"][h].append((dataset.yields[o] - actual) ** 2)
    rmse = {mth: np.array([np.sqrt(np.mean(sq[mth][h], axis=0)) for h in horizons]) for mth in methods}
    counts = {h: len(sq[methods[0]][h]) for h in horizons}
    return ForecastReport(horizons, dataset.maturities, rmse, counts, tuple(origins))


def monthly_dates(start: str, n: int) -> np.ndarray:
    return np.datetime64(start, "M") + np.arange(n)


def sparse_difference_var(k: int = 8, r: int = 12, seed: int = 0) -> VarParams:
    """A stable sparse VAR(r) for yield differences: own lag-1 persistence,
    neighbouring-maturity spillovers at lag 1 and a small own effect at lag r."""
    rng = np.random.default_rng(seed)
    phi = [np.zeros((k, k)) for _ in range(r)]
    phi[0][np.diag_indices(k)] = rng.uniform(0.3, 0.5, k)
    for i in range(k - 1):
        phi[0][i, i + 1] = rng.uniform(0.1, 0.2)
    if r > 1:
        phi[r - 1][np.diag_indices(k)] = rng.uniform(-0.15, 0.15, k)
    params = VarParams(tuple(phi))
    if not is_stable(params):
        raise RuntimeError("generated difference VAR is unstable")
    return params


def synthetic_yields(seed: int = 0, start: str = "1986-01", n_months: int = 264,
                     maturities: Sequence[int] = DEFAULT_MATURITIES, r: int = 12,
                     noise_scale: float = 0.1, params: VarParams | None = None) -> YieldDataset:
    """Yields whose first differences follow a sparse VAR(r), integrated from a
    hump-free upward-sloping curve."""
    k = len(maturities)
    params = params or sparse_difference_var(k, r, seed)
    U = noise_scale * np.eye(k)
    d = simulate(params, NoiseSpec(U, seed), n_months - 1, burn_in=200).values
    tau = np.asarray(maturities, dtype=float)
    level0 = 5.0 + 1.5 * (1 - np.exp(-tau / 36.0))
    levels = np.vstack([level0, level0 + np.cumsum(d, axis=0)])
    return YieldDataset(monthly_dates(start, n_months), tuple(maturities), levels)
