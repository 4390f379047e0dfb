"""Folded-concave penalties (L1, SCAD, MCP).

All penalties are parameterised by a tuning level ``lam`` and, for SCAD and
MCP, a shape ``a``. ``rho = p_lam / lam`` is the rescaled penalty used in the
local-concavity and certificate computations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

ArrayLike = Union[float, np.ndarray]

L1 = "l1"
SCAD = "scad"
MCP = "mcp"
KINDS = (L1, SCAD, MCP)

DEFAULT_A = {SCAD: 3.7, MCP: 3.0}

# integer codes used by the compiled solver kernels
KIND_CODES = {L1: 0, SCAD: 1, MCP: 2}


@dataclass(frozen=True)
class PenaltySpec:
    kind: str
    lam: float
    a: float | None = None

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind == "lasso":
            kind = L1
        if kind not in KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"lam must be positive and finite, got {self.lam}")
        a = self.a
        if kind == L1:
            a = None
        elif a is None:
            a = DEFAULT_A[kind]
        object.__setattr__(self, "a", None if a is None else float(a))
        if kind == SCAD and not self.a > 2:
            raise ValueError(f"SCAD needs a > 2, got {self.a}")
        if kind == MCP and not self.a >= 1:
            raise ValueError(f"MCP needs a >= 1, got {self.a}")

    @property
    def code(self) -> int:
        return KIND_CODES[self.kind]

    def with_lambda(self, lam: float) -> "PenaltySpec":
        return replace(self, lam=float(lam))

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "lambda": self.lam}
        if self.kind != L1:
            d["a"] = self.a
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PenaltySpec":
        lam = d.get("lambda", d.get("lam"))
        return cls(d["kind"], float(lam), d.get("a"))


@dataclass(frozen=True)
class PenaltyDiagnostics:
    rho_prime_at_d: float
    lambda_rho_prime_at_d: float
    d_over_lambda: float
    kappa_sup: float
    weak_signal_hint: bool


def _scalar_or_array(out: np.ndarray, like) -> ArrayLike:
    return float(out) if np.ndim(like) == 0 else out


def penalty_derivative(spec: PenaltySpec, x: ArrayLike) -> ArrayLike:
    """Derivative p'_lam(x) for x >= 0."""
    xs = np.asarray(x, dtype=float)
    if np.any(xs < 0) or np.any(np.isnan(xs)):
        raise ValueError("penalty_derivative is defined for x >= 0 only")
    lam, a = spec.lam, spec.a
    if spec.kind == L1:
        out = np.full_like(xs, lam)
    elif spec.kind == SCAD:
        out = np.where(xs <= lam, lam, np.maximum(a * lam - xs, 0.0) / (a - 1.0))
    else:
        out = np.maximum(lam - xs / a, 0.0)
    return _scalar_or_array(out, x)


def penalty_value(spec: PenaltySpec, x: ArrayLike) -> ArrayLike:
    """p_lam(|x|), the exact integral of the derivative from 0 to |x|."""
    ax = np.abs(np.asarray(x, dtype=float))
    lam, a = spec.lam, spec.a
    if spec.kind == L1:
        out = lam * ax
    elif spec.kind == SCAD:
        mid = (2.0 * a * lam * ax - ax * ax - lam * lam) / (2.0 * (a - 1.0))
        out = np.where(
            ax <= lam, lam * ax,
            np.where(ax <= a * lam, mid, 0.5 * lam * lam * (a + 1.0)),
        )
    else:
        out = np.where(ax <= a * lam, lam * ax - ax * ax / (2.0 * a), 0.5 * a * lam * lam)
    return _scalar_or_array(out, x)


def penalty_sum(spec: PenaltySpec, theta: np.ndarray) -> float:
    return float(np.sum(penalty_value(spec, np.asarray(theta, dtype=float))))


def _neg_rho_second(spec: PenaltySpec, ax: np.ndarray) -> np.ndarray:
    # branch points take the value from the concave side
    lam, a = spec.lam, spec.a
    if spec.kind == L1:
        return np.zeros_like(ax)
    if spec.kind == SCAD:
        inside = (ax >= lam) & (ax <= a * lam)
        return np.where(inside, 1.0 / ((a - 1.0) * lam), 0.0)
    return np.where(ax <= a * lam, 1.0 / (a * lam), 0.0)


def local_concavity(spec: PenaltySpec, coords) -> float:
    """kappa(rho; x) = max_j -rho''(|x_j|), with rho = p_lam / lam.

    Every coordinate must be nonzero. An empty vector has zero concavity.
    """
    ax = np.abs(np.atleast_1d(np.asarray(coords, dtype=float)))
    if ax.size == 0:
        return 0.0
    if np.any(ax == 0):
        raise ValueError("local_concavity needs all coordinates nonzero")
    return float(np.max(_neg_rho_second(spec, ax)))


def diagnose(spec: PenaltySpec, d: float, q: int, T: int) -> PenaltyDiagnostics:
    """Finite-sample report on the penalty conditions at half-minimum-signal ``d``.

    The concavity supremum is taken over (0, 2d], a stand-in for the unknown
    neighbourhood of the true coefficients; the boolean is a hint only.
    """
    if not d > 0:
        raise ValueError("d must be positive")
    pd_ = penalty_derivative(spec, d)
    lam, a = spec.lam, spec.a
    if spec.kind == L1:
        kappa = 0.0
    elif spec.kind == SCAD:
        kappa = 1.0 / ((a - 1.0) * lam) if 2.0 * d >= lam else 0.0
    else:
        kappa = 1.0 / (a * lam)
    return PenaltyDiagnostics(
        rho_prime_at_d=pd_ / lam,
        lambda_rho_prime_at_d=pd_,
        d_over_lambda=d / lam,
        kappa_sup=kappa,
        weak_signal_hint=bool(pd_ * math.sqrt(q * T) < 1.0),
    )
