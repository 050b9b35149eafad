"""Regularization kernels replacing the unstable cosh/sinh growth factors.

All kernels are evaluated in damped form: only exponentials with a
non-positive exponent are ever formed, so evaluation stays finite for
arbitrarily large eigenvalues. Arguments broadcast like numpy ufuncs.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import OverflowGuardError

__all__ = [
    "RegParams",
    "KernelVariant",
    "KernelFamily",
    "kernel_Q",
    "kernel_R",
    "kernel_Phi",
    "kernel_Psi",
    "semilinear_P_Q_R",
    "exact_kernels",
    "phi_bound",
    "psi_bound",
    "EXP_GUARD",
]

EXP_GUARD = 700.0
_T_SLACK = 1e-12


@dataclass(frozen=True)
class RegParams:
    """Noise level, exponent and horizon. ``beta = epsilon**m`` is derived.

    ``epsilon = 0`` gives ``beta = 0``, i.e. the exact (unregularized)
    kernels; useful for discretization-floor runs.
    """

    epsilon: float
    m: float = 0.99
    horizon: float = 1.0

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if not 0 < self.m < 1:
            raise ValueError(f"m must lie in (0, 1), got {self.m}")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")

    @property
    def beta(self) -> float:
        return self.epsilon**self.m

    @classmethod
    def from_beta(cls, beta: float, m: float = 0.99, horizon: float = 1.0) -> "RegParams":
        """Params whose derived beta equals ``beta`` up to rounding."""
        return cls(beta ** (1.0 / m), m, horizon)

    def require_unit_beta(self) -> None:
        if not 0 < self.beta < 1:
            raise ValueError(f"error bounds need 0 < beta < 1, got beta={self.beta}")


class KernelVariant(str, enum.Enum):
    QUASI_REVERSIBILITY = "quasi-reversibility"
    QUASI_BOUNDARY = "quasi-boundary"
    TRUNCATION = "truncation"
    NEW_LINEAR = "new-linear"
    SEMILINEAR = "semilinear"


def default_cutoff(beta: float) -> float:
    """m_beta = sqrt(ln(1/beta)): grows without bound as beta -> 0."""
    if beta <= 0:
        return math.inf
    return math.sqrt(max(math.log(1.0 / beta), 0.0))


@dataclass(frozen=True)
class KernelFamily:
    """Which pair of kernels replaces ``(cosh, sinh)``.

    ``a`` is the quasi-boundary exponent (``a >= 1``); ``cutoff`` maps beta
    to the truncation threshold ``m_beta`` and must be decreasing in beta.
    """

    variant: KernelVariant = KernelVariant.NEW_LINEAR
    a: float = 1.0
    cutoff: Optional[Callable[[float], float]] = None

    def __post_init__(self):
        object.__setattr__(self, "variant", KernelVariant(self.variant))
        if self.variant is KernelVariant.QUASI_BOUNDARY and self.a < 1:
            raise ValueError(f"quasi-boundary exponent a must be >= 1, got {self.a}")

    def m_beta(self, beta: float) -> float:
        return (self.cutoff or default_cutoff)(beta)


def _check_t(t, horizon):
    t = np.asarray(t, dtype=float)
    if np.any(t < -_T_SLACK) or np.any(t > horizon + _T_SLACK):
        raise ValueError(f"t outside [0, {horizon}]")
    return t


def _damped_pair(fam: KernelFamily, t, lambda_p, params: RegParams):
    """Return (cosh-replacement, sinh-replacement)."""
    T = params.horizon
    t = _check_t(t, T)
    lam = np.asarray(lambda_p, dtype=float)
    x = np.sqrt(lam)
    beta = params.beta
    v = fam.variant
    if v is KernelVariant.NEW_LINEAR:
        e = np.exp(-x * t)
        base = 1.0 / (2.0 * beta + 2.0 * e)
        return base + 0.5 * e, base - 0.5 * e
    if v is KernelVariant.SEMILINEAR:
        phi = kernel_Phi(t, lam, params)
        e = np.exp(-x * t)
        return phi + 0.5 * e, phi - 0.5 * e
    if v is KernelVariant.QUASI_REVERSIBILITY:
        arg = x * t / np.sqrt(1.0 + beta**2 * lam)
        return np.cosh(arg), np.sinh(arg)
    if v is KernelVariant.QUASI_BOUNDARY:
        # cosh(x t) / (1 + beta cosh(a x T)), numerator and denominator
        # scaled by e^{-a x T}; t <= T <= aT keeps every exponent <= 0.
        aT = fam.a * T
        scale = np.exp(x * (t - aT))
        den = np.exp(-x * aT) + 0.5 * beta * (1.0 + np.exp(-2.0 * x * aT))
        e2 = np.exp(-2.0 * x * t)
        return 0.5 * scale * (1.0 + e2) / den, 0.5 * scale * (1.0 - e2) / den
    if v is KernelVariant.TRUNCATION:
        m_beta = fam.m_beta(beta)
        keep = lam <= m_beta**2
        arg = np.where(keep, x * t, 0.0)
        return np.where(keep, np.cosh(arg), 0.0), np.where(keep, np.sinh(arg), 0.0)
    raise ValueError(f"unknown kernel variant {v!r}")


def _out(a):
    return float(a) if np.ndim(a) == 0 else a


def kernel_Q(fam: KernelFamily, t, lambda_p, params: RegParams):
    """Bounded replacement of ``cosh(sqrt(lambda_p) t)``."""
    return _out(_damped_pair(fam, t, lambda_p, params)[0])


def kernel_R(fam: KernelFamily, t, lambda_p, params: RegParams):
    """Bounded replacement of ``sinh(sqrt(lambda_p) t)``."""
    return _out(_damped_pair(fam, t, lambda_p, params)[1])


def kernel_Phi(t, lambda_p, params: RegParams):
    """``e^{-x(T-t)} / (2 beta x + 2 e^{-x T})`` with ``x = sqrt(lambda_p)``."""
    T = params.horizon
    t = _check_t(t, T)
    x = np.sqrt(np.asarray(lambda_p, dtype=float))
    num = np.exp(-x * (T - t))
    return _out(num / (2.0 * params.beta * x + 2.0 * np.exp(-x * T)))


def kernel_Psi(t, s, lambda_p, params: RegParams):
    """``e^{-x(T+s-t)} / (2 beta lambda_p + 2 x e^{-x T})`` for ``s <= t``."""
    T = params.horizon
    t = _check_t(t, T)
    s = _check_t(s, T)
    if np.any(s > t + _T_SLACK):
        raise ValueError("Psi requires s <= t")
    lam = np.asarray(lambda_p, dtype=float)
    x = np.sqrt(lam)
    num = np.exp(-x * (T + s - t))
    return _out(num / (2.0 * params.beta * lam + 2.0 * x * np.exp(-x * T)))


def semilinear_P_Q_R(t, s, lambda_p, params: RegParams):
    """Semilinear kernels ``(P, Q, R)``; ``R`` is None when ``s`` is None.

    P and Q replace cosh and sinh of ``x t``; R replaces ``sinh(x (t - s))``.
    """
    x = np.sqrt(np.asarray(lambda_p, dtype=float))
    phi = np.asarray(kernel_Phi(t, lambda_p, params))
    e = np.exp(-x * np.asarray(t, dtype=float))
    P, Q = _out(phi + 0.5 * e), _out(phi - 0.5 * e)
    if s is None:
        return P, Q, None
    psi = np.asarray(kernel_Psi(t, s, lambda_p, params))
    R = x * psi - 0.5 * np.exp(-x * (np.asarray(t, dtype=float) - np.asarray(s, dtype=float)))
    return P, Q, _out(R)


def exact_kernels(t, lambda_p, mode=None):
    """Unregularized ``(cosh(x t), sinh(x t))``; for oracles and exact solutions."""
    x = np.sqrt(np.asarray(lambda_p, dtype=float))
    arg = x * np.asarray(t, dtype=float)
    if np.any(arg > EXP_GUARD):
        if mode is None and np.ndim(arg) > 0:
            mode = int(np.argmax(arg > EXP_GUARD)) + 1
        raise OverflowGuardError(
            f"sqrt(lambda_p) t = {np.max(arg):.6g} exceeds {EXP_GUARD} (mode {mode})", mode
        )
    return _out(np.cosh(arg)), _out(np.sinh(arg))


def _log_factor(beta: float, T: float, power):
    # (beta/T)^power * ln(T/beta)^power
    return np.exp(power * (math.log(beta / T) + math.log(math.log(T / beta))))


def phi_bound(t, params: RegParams):
    """Upper bound on ``kernel_Phi`` uniform in lambda_p."""
    T, beta = params.horizon, params.beta
    return _out(0.5 * _log_factor(beta, T, -np.asarray(t, dtype=float) / T))


def psi_bound(t, s, lambda_1: float, params: RegParams):
    """Upper bound on ``kernel_Psi`` valid for every lambda_p >= lambda_1."""
    T, beta = params.horizon, params.beta
    power = (np.asarray(s, dtype=float) - np.asarray(t, dtype=float)) / T
    return _out(_log_factor(beta, T, power) / (2.0 * math.sqrt(lambda_1)))
