"""Regularized integral equation for ``u_tt = A u + f(t, u)``.

Per mode p, with ``x = sqrt(lambda_p)``, the regularized solution solves

    v_p(t) = Phi(t) M_p(phi, g) + e^{-x t}/2 M_p(phi, -g)
             + int_0^t [Psi(s, t) - e^{x(s-t)}/(2x)] f_p(s, v(s)) ds.

Two solvers are provided. :func:`march_solve` is the first-order scheme
that freezes f at the previous time slice. :func:`picard_solve` iterates
the full equation to a fixed point on composite Gauss-Legendre nodes
(a Nystrom discretization), interpolating f inside the current subinterval.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .errors import ConvergenceError, OverflowGuardError
from .grid import GridSolution
from .kernels import EXP_GUARD, RegParams
from .linear_solver import CauchyData, NoiseModel, add_noise
from .spectral_core import (
    EigenSystem,
    SpectralVector,
    basis_matrix,
    gauss_legendre,
    project_values,
)

__all__ = [
    "Nonlinearity",
    "ZERO_NONLINEARITY",
    "SolverMode",
    "MarchingConfig",
    "PicardTrace",
    "mp_functional",
    "free_part",
    "march_solve",
    "picard_solve",
    "solve",
    "ContractionReport",
    "contraction_diagnostics",
    "compute_P_constant",
    "log_rate_constant",
    "log_rate_bound",
    "stability_bound_semilinear",
    "LogRateReport",
    "verify_theorem8",
    "fit_loglog_slope",
]


@dataclass(frozen=True)
class Nonlinearity:
    """Pointwise source ``f(x, t, u)``; must broadcast over numpy arrays.

    ``time_dependent=False`` promises f ignores t, which lets the marching
    scheme integrate the kernels in closed form.
    """

    func: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    lipschitz_k: float
    time_dependent: bool = True
    name: str = "f"

    def __call__(self, x, t, u):
        out = self.func(x, t, u)
        return np.broadcast_to(out, np.broadcast_shapes(np.shape(x), np.shape(t), np.shape(u)))


ZERO_NONLINEARITY = Nonlinearity(lambda x, t, u: np.zeros_like(u), 0.0, False, "zero")


class SolverMode(str, enum.Enum):
    TIME_MARCHING = "march"
    GLOBAL_PICARD = "picard"


@dataclass(frozen=True)
class MarchingConfig:
    m_steps: int = 60
    k_steps: int = 60
    quad_time_order: int = 16
    quad_space_order: int = 32
    picard_max_iter: int = 200
    picard_tol: float = 1e-10
    mode: SolverMode = SolverMode.TIME_MARCHING

    def __post_init__(self):
        object.__setattr__(self, "mode", SolverMode(self.mode))
        for name in ("m_steps", "k_steps", "quad_time_order", "quad_space_order", "picard_max_iter"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not self.picard_tol > 0:
            raise ValueError("picard_tol must be positive")


@dataclass
class PicardTrace:
    """Sup-norm distances between successive Picard iterates."""

    diffs: List[float] = field(default_factory=list)
    lambda_1: float = 1.0
    horizon: float = 1.0
    residual: float = math.nan
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.diffs)

    @property
    def ratios(self) -> List[float]:
        d = self.diffs
        return [d[k] / d[k - 1] for k in range(1, len(d)) if d[k - 1] > 0]


def mp_functional(w1: SpectralVector, w2: SpectralVector, p: int) -> float:
    """``<w1, phi_p> + <w2, phi_p> / sqrt(lambda_p)``."""
    if w1.system != w2.system:
        raise ValueError("w1 and w2 must share one eigensystem")
    if not 1 <= p <= w1.system.n_modes:
        raise IndexError(f"mode index {p} outside 1..{w1.system.n_modes}")
    return float(w1.coeffs[p - 1] + w2.coeffs[p - 1] / w1.system.frequencies[p - 1])


def _denominator(x: np.ndarray, params: RegParams) -> np.ndarray:
    return 2.0 * params.beta * x + 2.0 * np.exp(-x * params.horizon)


def free_part(data: CauchyData, params: RegParams, ts) -> np.ndarray:
    """The f-independent terms at each time, shape ``(len(ts), N)``."""
    x = data.system.frequencies
    T = params.horizon
    ts = np.asarray(ts, dtype=float)[:, None]
    m_plus = data.phi.coeffs + data.g.coeffs / x
    m_minus = data.phi.coeffs - data.g.coeffs / x
    phi_kernel = np.exp(-x * (T - ts)) / _denominator(x, params)
    return phi_kernel * m_plus + 0.5 * np.exp(-x * ts) * m_minus


def _kernel_of_lag(d: np.ndarray, x: np.ndarray, params: RegParams) -> np.ndarray:
    """``Psi(s, t) - e^{x(s-t)}/(2x)`` written in the lag ``d = t - s >= 0``."""
    T = params.horizon
    return np.exp(-x * (T - d)) / (x * _denominator(x, params)) - np.exp(-x * d) / (2.0 * x)


def _time_grid(params: RegParams, cfg: MarchingConfig) -> np.ndarray:
    return np.linspace(0.0, params.horizon, cfg.m_steps + 1)


def _meta(params: RegParams, cfg: MarchingConfig, f: Nonlinearity) -> Dict:
    return {
        "epsilon": params.epsilon,
        "m": params.m,
        "beta": params.beta,
        "horizon": params.horizon,
        "mode": cfg.mode.value,
        "m_steps": cfg.m_steps,
        "k_steps": cfg.k_steps,
        "quad_time_order": cfg.quad_time_order,
        "quad_space_order": cfg.quad_space_order,
        "nonlinearity": f.name,
    }


def march_solve(
    data: CauchyData,
    f: Nonlinearity,
    params: RegParams,
    cfg: MarchingConfig = MarchingConfig(),
) -> GridSolution:
    """First-order time marching with f frozen at the previous slice.

    Slice 0 is the (noisy) initial value. Slice i adds, for every earlier
    subinterval ``[t_{j-1}, t_j]``, the kernel integral of
    ``f(x, s, v_{j-1}(x))``. Kernel integrals are exact when f does not
    depend on s, otherwise Gauss-Legendre in s.
    """
    sys = data.system
    x = sys.frequencies
    T = params.horizon
    M = cfg.m_steps
    quad_x = gauss_legendre(cfg.quad_space_order, 0.0, sys.domain_length)
    B = basis_matrix(sys, quad_x.nodes)
    ts = _time_grid(params, cfg)
    lam_part = free_part(data, params, ts)
    den = _denominator(x, params)

    V = np.zeros((M + 1, sys.n_modes))
    V[0] = data.phi.coeffs
    if f.time_dependent:
        ref = gauss_legendre(cfg.quad_time_order)
        dt = T / M
        S = ts[:-1, None] + 0.5 * (ref.nodes + 1.0) * dt
        W = 0.5 * ref.weights * dt
        F = np.zeros((M, ref.order, sys.n_modes))
    else:
        F = np.zeros((M, sys.n_modes))

    for i in range(1, M + 1):
        j = i - 1
        u_prev = B @ V[j]
        t = ts[i]
        if f.time_dependent:
            vals = f(quad_x.nodes[None, :], S[j][:, None], u_prev[None, :])
            F[j] = project_values(sys, vals, quad_x)
            lag = t - S[:i][..., None]
            K = _kernel_of_lag(lag, x, params)
            V[i] = lam_part[i] + np.sum(W[None, :, None] * K * F[:i], axis=(0, 1))
        else:
            F[j] = project_values(sys, f(quad_x.nodes, ts[j], u_prev), quad_x)
            a = ts[:i, None]
            b = ts[1 : i + 1, None]
            psi_int = (np.exp(-x * (T + a - t)) - np.exp(-x * (T + b - t))) / (x * x * den)
            exp_int = (np.exp(x * (b - t)) - np.exp(x * (a - t))) / (2.0 * x * x)
            V[i] = lam_part[i] + np.sum((psi_int - exp_int) * F[:i], axis=0)

    return GridSolution.from_coeffs(V, ts, sys, cfg.k_steps, _meta(params, cfg, f))


def _lagrange_matrix(nodes: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``L[k, l] = ell_l(z_k)`` for the Lagrange basis on ``nodes``."""
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    bw = 1.0 / np.prod(diff, axis=1)
    dz = z[:, None] - nodes[None, :]
    exact = np.isclose(dz, 0.0, rtol=0.0, atol=1e-15)
    dz[exact] = 1.0
    terms = bw[None, :] / dz
    L = terms / terms.sum(axis=1, keepdims=True)
    rows = np.any(exact, axis=1)
    L[rows] = exact[rows].astype(float)
    return L


class _NystromOperator:
    """Linear map from f-coefficients at source nodes to integral terms at targets.

    Sources are q Gauss-Legendre nodes in each of the M subintervals.
    Targets are the sources followed by the M+1 grid times.
    """

    def __init__(self, sys: EigenSystem, params: RegParams, cfg: MarchingConfig):
        T = params.horizon
        M, q = cfg.m_steps, cfg.quad_time_order
        x = sys.frequencies
        dt = T / M
        ref = gauss_legendre(q)
        xi, w = ref.nodes, ref.weights
        ts = _time_grid(params, cfg)
        src_t = (ts[:-1, None] + 0.5 * (xi + 1.0) * dt).ravel()
        src_j = np.repeat(np.arange(M), q)
        tgt_t = np.concatenate([src_t, ts])
        tgt_j = np.concatenate([src_j, np.arange(M + 1)])
        self.src_t, self.tgt_t, self.ts = src_t, tgt_t, ts
        self.n_src = src_t.size

        lag = tgt_t[:, None] - src_t[None, :]
        full = src_j[None, :] < tgt_j[:, None]
        lag = np.where(full, lag, 0.0)
        w_src = np.tile(0.5 * w * dt, M)
        A = np.empty((sys.n_modes, tgt_t.size, src_t.size))
        for p in range(sys.n_modes):
            A[p] = np.where(full, w_src[None, :] * _kernel_of_lag(lag, x[p : p + 1], params), 0.0)

        # Partial subinterval [t_j, s_{j,l'}]: the same q x q block for every j,
        # since the kernel depends only on the lag.
        tau = 0.5 * (xi + 1.0)
        z = -1.0 + (xi[None, :] + 1.0) * tau[:, None]  # partial nodes, reference coords
        lag_part = (tau[:, None] * dt) * (1.0 - 0.5 * (xi[None, :] + 1.0))
        w_part = 0.5 * w[None, :] * tau[:, None] * dt
        for p in range(sys.n_modes):
            Kp = w_part * _kernel_of_lag(lag_part, x[p : p + 1], params)
            block = np.einsum("ar,arl->al", Kp, np.stack([_lagrange_matrix(xi, z[a]) for a in range(q)]))
            for j in range(M):
                sl = slice(j * q, (j + 1) * q)
                A[p, sl, sl] = block
        self.A = A

    def apply(self, F: np.ndarray) -> np.ndarray:
        out = np.empty((self.A.shape[1], F.shape[1]))
        for p in range(F.shape[1]):
            out[:, p] = self.A[p] @ F[:, p]
        return out


def picard_solve(
    data: CauchyData,
    f: Nonlinearity,
    params: RegParams,
    cfg: MarchingConfig = MarchingConfig(mode=SolverMode.GLOBAL_PICARD),
) -> GridSolution:
    """Fixed point of the regularized integral equation by Picard iteration.

    Stops once the sup over all collocation times of the change between
    iterates drops below ``cfg.picard_tol``. The returned solution carries
    the :class:`PicardTrace` in ``meta["trace"]``.
    """
    sys = data.system
    quad_x = gauss_legendre(cfg.quad_space_order, 0.0, sys.domain_length)
    B = basis_matrix(sys, quad_x.nodes)
    op = _NystromOperator(sys, params, cfg)
    lam_tgt = free_part(data, params, op.tgt_t)
    n = op.n_src
    src_t = op.src_t[:, None]

    def step(v_tgt):
        U = v_tgt[:n] @ B.T
        F = project_values(sys, f(quad_x.nodes[None, :], src_t, U), quad_x)
        return lam_tgt + op.apply(F)

    trace = PicardTrace(lambda_1=sys.lambda_1, horizon=params.horizon)
    v = lam_tgt
    for _ in range(cfg.picard_max_iter):
        new = step(v)
        diff = float(np.max(np.sqrt(np.sum((new - v) ** 2, axis=1))))
        trace.diffs.append(diff)
        v = new
        if not np.isfinite(diff):
            break
        if diff < cfg.picard_tol:
            trace.converged = True
            break
    if not trace.converged:
        ratios = trace.ratios
        raise ConvergenceError(
            f"Picard iteration did not reach tol={cfg.picard_tol:g} in "
            f"{cfg.picard_max_iter} iterations (last change {trace.diffs[-1]:.3e})",
            last_ratio=ratios[-1] if ratios else None,
            trace=trace,
        )
    residual = step(v) - v
    trace.residual = float(np.max(np.sqrt(np.sum(residual**2, axis=1))))
    meta = _meta(params, cfg, f)
    meta["trace"] = trace
    return GridSolution.from_coeffs(v[n:], op.ts, sys, cfg.k_steps, meta)


def solve(data: CauchyData, f: Nonlinearity, params: RegParams, cfg: MarchingConfig) -> GridSolution:
    if cfg.mode is SolverMode.GLOBAL_PICARD:
        return picard_solve(data, f, params, cfg)
    return march_solve(data, f, params, cfg)


@dataclass
class ContractionReport:
    ratios: List[float]
    factors: List[float]
    m0: Optional[int]
    converged_in: int

    @property
    def eventually_contracting(self) -> bool:
        return not self.ratios or self.ratios[-1] < 1.0


def _log_factor(m: int, log_c: float) -> float:
    return 0.5 * (m * log_c - math.lgamma(m + 1))


def contraction_diagnostics(
    trace: PicardTrace, params: RegParams, f: Nonlinearity, n_factors: int = 20
) -> ContractionReport:
    """Observed iterate ratios next to the a-priori factor
    ``sqrt((T^3 K^2 beta^-2 / lambda_1)^m T^m / m!)`` and the first m where it drops below 1.
    """
    T = trace.horizon
    K = f.lipschitz_k
    beta = params.beta
    if K == 0:
        factors = [0.0] * n_factors
        m0 = 1
    elif beta == 0:
        factors = [math.inf] * n_factors
        m0 = None
    else:
        log_c = math.log(T**4 * K**2 / (beta**2 * trace.lambda_1))
        factors = [math.exp(_log_factor(m, log_c)) for m in range(1, n_factors + 1)]
        if _log_factor(1, log_c) < 0:
            m0 = 1
        else:
            lo = max(1, int(math.exp(log_c)))
            hi = 2 * lo
            while _log_factor(hi, log_c) >= 0:
                lo, hi = hi, 2 * hi
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if _log_factor(mid, log_c) < 0:
                    hi = mid
                else:
                    lo = mid
            m0 = hi
    return ContractionReport(trace.ratios, factors, m0, trace.iterations)


def compute_P_constant(
    u_exact: Callable[[float], SpectralVector],
    du_exact: Callable[[float], SpectralVector],
    params: RegParams,
    n_grid: int = 101,
) -> float:
    """``4 sup_t sum_p e^{x(T-t)} (x u_p(t) + u_p'(t))^2`` over a uniform t-grid."""
    T = params.horizon
    best = 0.0
    for t in np.linspace(0.0, T, n_grid):
        u = u_exact(float(t))
        du = du_exact(float(t))
        x = u.system.frequencies
        if np.any(x * T > EXP_GUARD):
            raise OverflowGuardError("e^{sqrt(lambda_p) T} overflows", int(np.argmax(x * T > EXP_GUARD)) + 1)
        val = float(np.sum(np.exp(x * (T - t)) * (x * u.coeffs + du.coeffs) ** 2))
        best = max(best, val)
    return 0.0 if best == 0.0 else 4.0 * best + 1e-12


def log_rate_constant(t: float, P: float, K: float, lambda_1: float, T: float) -> float:
    c = K**2 * T**2 * t / (2.0 * lambda_1)
    return math.sqrt((3 * lambda_1 + 3) / lambda_1) * math.exp(3 * c) + math.exp(c) * math.sqrt(P)


def log_rate_bound(t: float, params: RegParams, P: float, K: float, lambda_1: float) -> float:
    """``Q eps^{m(T-t)/T} T^{t/T} ln(T/eps^m)^{-t/T}`` with Q evaluated at t."""
    T, eps, m = params.horizon, params.epsilon, params.m
    Q = log_rate_constant(t, P, K, lambda_1, T)
    return Q * eps ** (m * (T - t) / T) * T ** (t / T) * math.log(T / eps**m) ** (-t / T)


def stability_bound_semilinear(t: float, params: RegParams, K: float, lambda_1: float) -> float:
    """Distance bound between fixed points from exact and from noisy data."""
    T, beta = params.horizon, params.beta
    growth = math.sqrt((3 * lambda_1 + 3) / lambda_1) * math.exp(3 * K**2 * T**2 * t / (2 * lambda_1))
    return growth * (beta / T) ** (-t / T) * math.log(T / beta) ** (-t / T) * params.epsilon


def fit_loglog_slope(eps: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log10(error) against log10(eps)."""
    lx = np.log10(np.asarray(eps, dtype=float))
    ly = np.log10(np.asarray(errors, dtype=float))
    dx = lx - lx.mean()
    return float(np.sum(dx * (ly - ly.mean())) / np.sum(dx * dx))


@dataclass
class LogRateReport:
    t_grid: np.ndarray
    eps_list: List[float]
    P: float
    errors: Dict[float, np.ndarray]  # eps -> (n_seeds, M+1) H-norm errors
    bounds: Dict[float, np.ndarray]  # eps -> (M+1,)
    fit_t: float
    slope: float
    theoretical_slope: float
    log_regime: bool

    @property
    def violations(self) -> List[tuple]:
        out = []
        for eps in self.eps_list:
            bad = self.errors[eps] > self.bounds[eps][None, :]
            for s, i in zip(*np.nonzero(bad)):
                out.append((eps, int(s), float(self.t_grid[i])))
        return out

    @property
    def bound_holds(self) -> bool:
        return not self.violations


def verify_theorem8(
    problem,
    eps_list: Sequence[float],
    seeds: Sequence[int],
    m: float = 0.99,
    cfg: MarchingConfig = MarchingConfig(),
    fit_t: float = 0.5,
    noise_model: NoiseModel = NoiseModel.SCALAR_RAND,
) -> LogRateReport:
    """Check the Hölder-logarithmic bound on a manufactured problem and fit the rate.

    ``problem`` needs ``data`` (exact CauchyData), ``nonlinearity``,
    ``horizon``, ``exact_coeffs(t)`` and ``exact_dcoeffs(t)``. The slope
    is fitted to the per-eps median of ``|u(fit_t) - v(fit_t)|``.
    """
    T = problem.horizon
    sys = problem.data.system
    f = problem.nonlinearity
    base = RegParams(eps_list[0], m, T)
    P = compute_P_constant(
        lambda t: SpectralVector(problem.exact_coeffs(t), sys),
        lambda t: SpectralVector(problem.exact_dcoeffs(t), sys),
        base,
    )
    errors, bounds = {}, {}
    t_grid = None
    for eps in eps_list:
        params = RegParams(eps, m, T)
        rows = []
        for seed in seeds:
            noisy = add_noise(problem.data, eps, seed, noise_model)
            sol = solve(noisy, f, params, cfg)
            t_grid = sol.t_grid
            exact = np.array([problem.exact_coeffs(t) for t in t_grid])
            rows.append(np.sqrt(np.sum((exact - sol.coeffs) ** 2, axis=1)))
        errors[eps] = np.array(rows)
        bounds[eps] = np.array(
            [log_rate_bound(t, params, P, f.lipschitz_k, sys.lambda_1) for t in t_grid]
        )
    i_fit = int(np.argmin(np.abs(t_grid - fit_t)))
    medians = [float(np.median(errors[eps][:, i_fit])) for eps in eps_list]
    slope = fit_loglog_slope(eps_list, medians)
    return LogRateReport(
        t_grid=t_grid,
        eps_list=list(eps_list),
        P=P,
        errors=errors,
        bounds=bounds,
        fit_t=float(t_grid[i_fit]),
        slope=slope,
        theoretical_slope=m * (T - t_grid[i_fit]) / T,
        log_regime=bool(np.isclose(t_grid[i_fit], T)),
    )
