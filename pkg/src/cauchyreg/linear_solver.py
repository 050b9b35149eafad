"""Linear homogeneous problem ``u_tt = A u`` with Cauchy data at t = 0."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .errors import OverflowGuardError
from .kernels import EXP_GUARD, KernelFamily, KernelVariant, RegParams, kernel_Q, kernel_R
from .rng import stream
from .spectral_core import (
    EigenSystem,
    QuadratureRule,
    SpectralVector,
    default_space_rule,
    project_values,
)

__all__ = [
    "CauchyData",
    "NoiseModel",
    "exact_solution",
    "exact_derivative",
    "regularized_solution",
    "add_noise",
    "compute_E1",
    "compute_E2",
    "compute_E3",
    "stability_bound",
    "linear_error_bound",
    "BoundSample",
    "LinearBoundReport",
    "verify_theorem2",
]

_SLACK = 1e-12


@dataclass(frozen=True)
class CauchyData:
    """Initial value ``phi`` and initial velocity ``g`` in one eigenbasis."""

    phi: SpectralVector
    g: SpectralVector

    def __post_init__(self):
        if self.phi.system != self.g.system:
            raise ValueError("phi and g must share one eigensystem")

    @property
    def system(self) -> EigenSystem:
        return self.phi.system

    @classmethod
    def from_coeffs(cls, system: EigenSystem, phi, g) -> "CauchyData":
        return cls(SpectralVector(phi, system), SpectralVector(g, system))

    def scaled(self, c: float) -> "CauchyData":
        return CauchyData(self.phi * c, self.g * c)

    def __add__(self, other: "CauchyData") -> "CauchyData":
        return CauchyData(self.phi + other.phi, self.g + other.g)


class NoiseModel(str, enum.Enum):
    SCALAR_RAND = "scalar"
    PER_POINT_RAND = "per-point"


def _growth(data: CauchyData, t: float):
    x = data.system.frequencies
    arg = x * t
    if np.any(arg > EXP_GUARD):
        mode = int(np.argmax(arg > EXP_GUARD)) + 1
        raise OverflowGuardError(
            f"sqrt(lambda_{mode}) t = {arg[mode - 1]:.6g} exceeds {EXP_GUARD}", mode
        )
    return x, np.cosh(arg), np.sinh(arg)


def exact_solution(data: CauchyData, t: float) -> SpectralVector:
    """Mild solution: ``cosh(x t) phi_p + sinh(x t) g_p / x`` per mode."""
    x, ch, sh = _growth(data, t)
    return SpectralVector(ch * data.phi.coeffs + sh / x * data.g.coeffs, data.system)


def exact_derivative(data: CauchyData, t: float) -> SpectralVector:
    """Termwise time derivative of :func:`exact_solution`."""
    x, ch, sh = _growth(data, t)
    return SpectralVector(x * sh * data.phi.coeffs + ch * data.g.coeffs, data.system)


def regularized_solution(
    data: CauchyData,
    t: float,
    params: RegParams,
    fam: KernelFamily = KernelFamily(),
) -> SpectralVector:
    """Replace cosh/sinh by the family's kernels: ``Q phi_p + R g_p / x``."""
    lam = data.system.eigenvalues
    x = np.sqrt(lam)
    Q = np.asarray(kernel_Q(fam, t, lam, params))
    R = np.asarray(kernel_R(fam, t, lam, params))
    return SpectralVector(Q * data.phi.coeffs + R / x * data.g.coeffs, data.system)


def add_noise(
    data: CauchyData,
    epsilon: float,
    seed: int,
    model: NoiseModel = NoiseModel.SCALAR_RAND,
    quad: Optional[QuadratureRule] = None,
) -> CauchyData:
    """Perturb both data functions by ``epsilon * rand / sqrt(pi)``.

    ``rand`` is uniform on [-1, 1]: one draw per function for the scalar
    model, one draw per quadrature node for the per-point model. Each
    perturbation is rescaled if its norm exceeds ``epsilon``.
    """
    if epsilon == 0:
        return data
    sys = data.system
    if quad is None:
        quad = default_space_rule(sys)
    rng = stream(seed)
    model = NoiseModel(model)
    amp = epsilon / math.sqrt(sys.domain_length)
    if model is NoiseModel.SCALAR_RAND:
        r = rng.uniform(-1.0, 1.0, size=2)
        samples = amp * r[:, None] * np.ones((2, quad.order))
    else:
        samples = amp * rng.uniform(-1.0, 1.0, size=(2, quad.order))
    deltas = project_values(sys, samples, quad)
    norms = np.sqrt(np.sum(deltas**2, axis=1))
    for k in range(2):
        if norms[k] > epsilon:
            deltas[k] *= epsilon / norms[k]
    return CauchyData(
        data.phi + SpectralVector(deltas[0], sys),
        data.g + SpectralVector(deltas[1], sys),
    )


def compute_E1(data: CauchyData, T: float) -> float:
    """``sqrt(|u(T)|^2 / 2 + |u'(T)|^2 / (2 lambda_1))`` plus a tiny slack."""
    if not np.any(data.phi.coeffs) and not np.any(data.g.coeffs):
        return 0.0
    u = exact_solution(data, T).norm()
    du = exact_derivative(data, T).norm()
    return math.sqrt(u**2 / 2 + du**2 / (2 * data.system.lambda_1)) + _SLACK


def _weighted_sum(weights_log, terms):
    return math.sqrt(float(np.sum(np.exp(2 * weights_log) * terms**2)))


def compute_E2(data: CauchyData, T: float, t: Optional[float] = None) -> float:
    """Constant of the weighted terminal-velocity condition.

    The summand ``e^{x(T-t)} (x u_p(t) + u_p'(t))`` does not depend on t,
    so by default it is evaluated at t = T. Pass ``t`` to use the direct
    form at that time instead.
    """
    if not np.any(data.phi.coeffs) and not np.any(data.g.coeffs):
        return 0.0
    x = data.system.frequencies
    at = T if t is None else t
    c = x * exact_solution(data, at).coeffs + exact_derivative(data, at).coeffs
    return _weighted_sum(x * (T - at), c) + _SLACK


def compute_E3(data: CauchyData, t: float) -> float:
    """``sqrt(sum e^{2 x t} (x u_p(t) + u_p'(t))^2)`` plus a tiny slack."""
    if not np.any(data.phi.coeffs) and not np.any(data.g.coeffs):
        return 0.0
    x = data.system.frequencies
    c = x * exact_solution(data, t).coeffs + exact_derivative(data, t).coeffs
    return _weighted_sum(x * t, c) + _SLACK


def stability_bound(params: RegParams, lambda_1: float) -> float:
    """Bound on the distance between regularized solutions from exact and noisy data."""
    return math.sqrt(2 * (1 + 1 / lambda_1)) * params.epsilon / params.beta


def linear_error_bound(case: str, params: RegParams, t: float, lambda_1: float, E: float) -> float:
    """Total error bound for case ``"I"``, ``"II"`` or ``"III"`` at time t.

    ``E`` is the matching constant (E1, E2, or E3 evaluated at t).
    """
    eps, m, T = params.epsilon, params.m, params.horizon
    noise = math.sqrt(2 * (1 + 1 / lambda_1)) * eps ** (1 - m)
    case = case.upper()
    early = t <= T / 2
    if case == "I":
        return noise + E * (eps**m if early else eps ** (m * (T - t) / t))
    if case == "II":
        if early:
            return noise + eps**m / (2 * math.sqrt(lambda_1)) * E
        log_term = lambda_1 * T / (1 + math.log(math.sqrt(lambda_1) * T / eps**m))
        return noise + (
            eps ** (m * (T - t) / t) / (2 * math.sqrt(lambda_1)) * log_term ** ((2 * t - T) / t) * E
        )
    if case == "III":
        return noise + E * eps**m / 2
    raise ValueError(f"unknown case {case!r}; expected I, II or III")


@dataclass(frozen=True)
class BoundSample:
    t: float
    seed: int
    error: float
    bound: float

    @property
    def margin(self) -> float:
        return self.bound - self.error


@dataclass
class LinearBoundReport:
    case: str
    params: RegParams
    constant: float
    samples: List[BoundSample] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(s.margin >= 0 for s in self.samples)

    @property
    def min_margin(self) -> float:
        return min((s.margin for s in self.samples), default=math.inf)


def verify_theorem2(
    data: CauchyData,
    params: RegParams,
    case: str,
    t_samples: Iterable[float],
    seeds: Sequence[int],
    model: NoiseModel = NoiseModel.SCALAR_RAND,
) -> LinearBoundReport:
    """Compare ``|u(t) - v_eps(t)|`` against the case's bound over times and seeds.

    Violations are recorded in the report, never raised.
    """
    params.require_unit_beta()
    case = case.upper()
    T = params.horizon
    lam1 = data.system.lambda_1
    fam = KernelFamily(KernelVariant.NEW_LINEAR)
    t_samples = list(t_samples)
    if case == "I":
        constant = compute_E1(data, T)
    elif case == "II":
        constant = compute_E2(data, T)
    else:
        constant = float("nan")
    report = LinearBoundReport(case, params, constant)
    noisy_by_seed = {seed: add_noise(data, params.epsilon, seed, model) for seed in seeds}
    for t in t_samples:
        u = exact_solution(data, t)
        E = compute_E3(data, t) if case == "III" else constant
        bound = linear_error_bound(case, params, t, lam1, E)
        for seed in seeds:
            v = regularized_solution(noisy_by_seed[seed], t, params, fam)
            report.samples.append(BoundSample(t, seed, (u - v).norm(), bound))
    return report
