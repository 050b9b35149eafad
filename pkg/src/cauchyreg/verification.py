"""Pass/fail check suites for kernel properties and error bounds.

Every check returns :class:`CheckResult` records with a signed margin
(non-negative means the property holds) so callers can report how close
each bound came to being violated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .errors import ConvergenceError
from .kernels import (
    KernelFamily,
    KernelVariant,
    RegParams,
    exact_kernels,
    kernel_Phi,
    kernel_Psi,
    kernel_Q,
    kernel_R,
    phi_bound,
    psi_bound,
    semilinear_P_Q_R,
)
from .linear_solver import (
    CauchyData,
    NoiseModel,
    add_noise,
    regularized_solution,
    stability_bound,
    verify_theorem2,
)
from .semilinear_solver import (
    MarchingConfig,
    SolverMode,
    contraction_diagnostics,
    picard_solve,
    verify_theorem8,
)
from .spectral_core import BasisKind, EigenSystem

__all__ = [
    "CheckResult",
    "BETA_LADDER",
    "LIMIT_EIGENVALUES",
    "kernel_limit_checks",
    "kernel_property_checks",
    "kernel_bound_checks",
    "stability_checks",
    "bound_test_problems",
    "linear_bound_checks",
    "log_rate_checks",
    "contraction_checks",
    "run_suite",
]

BETA_LADDER = tuple(10.0**-k for k in range(1, 9))
# First three eigenvalues of both bases on [0, pi].
LIMIT_EIGENVALUES = (0.25, 1.0, 2.25, 4.0, 6.25, 9.0)
_ROUNDOFF = 1e-13


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    margin: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" {self.detail}" if self.detail else ""
        return f"{status} {self.name} margin={self.margin:.6g}{extra}"


def _limit_errors(betas, t, lam, s):
    """Errors of the five kernels against their limits, one row per beta."""
    fam = KernelFamily(KernelVariant.NEW_LINEAR)
    ch, sh = exact_kernels(t, lam)
    lag_sh = np.sinh(np.sqrt(lam) * (t - s))
    rows = []
    for beta in betas:
        p = RegParams.from_beta(beta)
        P, Q, Rs = semilinear_P_Q_R(t, s, lam, p)
        rows.append([
            np.abs(kernel_Q(fam, t, lam, p) - ch),
            np.abs(kernel_R(fam, t, lam, p) - sh),
            np.abs(P - ch),
            np.abs(Q - sh),
            np.abs(Rs - lag_sh),
        ])
    return np.array(rows)  # (n_beta, 5, n_points)


def kernel_limit_checks(tol: float = 1e-4, eigenvalues=LIMIT_EIGENVALUES) -> List[CheckResult]:
    """All five kernels approach cosh/sinh monotonically as beta shrinks."""
    t1 = np.linspace(0.0, 1.0, 11)
    T, L, S = np.meshgrid(t1, np.asarray(eigenvalues, dtype=float), t1, indexing="ij")
    keep = S <= T + 1e-15
    t, lam, s = T[keep], L[keep], S[keep]
    errs = _limit_errors(BETA_LADDER, t, lam, s)
    names = ["Q3-cosh", "R-sinh", "P-cosh", "Q-sinh", "Rsemi-sinh"]
    out = []
    for k, name in enumerate(names):
        e = errs[:, k, :]
        final = float(e[-1].max())
        out.append(CheckResult(f"limit/{name}", final < tol, tol - final, f"max_err={final:.3e}"))
        rise = float(np.max(np.diff(e, axis=0) - _ROUNDOFF * np.maximum(1.0, e[:-1])))
        out.append(CheckResult(f"monotone/{name}", rise <= 0, -rise))
    return out


def kernel_property_checks() -> List[CheckResult]:
    """Boundedness, limits, Phi monotonicity and overflow safety of the kernels."""
    fam = KernelFamily(KernelVariant.NEW_LINEAR)
    out = []
    lams = np.array([0.25, 1.0, 2.25, 4.0, 9.0, 1e6])
    ts = np.linspace(0.0, 1.0, 21)[:, None]
    for beta in (1e-1, 1e-4, 1e-8):
        p = RegParams.from_beta(beta)
        q = kernel_Q(fam, ts, lams, p)
        r = kernel_R(fam, ts, lams, p)
        # The sup is attained once e^{-x t} underflows, so allow relative roundoff.
        q_cap = (1 / (2 * beta) + 0.5) * (1 + _ROUNDOFF)
        r_cap = 1 / (2 * beta) * (1 + _ROUNDOFF)
        out.append(CheckResult(f"A/Q-bounded beta={beta:g}", bool(q.max() <= q_cap), float(q_cap - q.max())))
        out.append(CheckResult(f"C/R-bounded beta={beta:g}", bool(r.max() <= r_cap), float(r_cap - r.max())))
    for r in kernel_limit_checks():
        if r.name.startswith(("limit/Q3", "monotone/Q3")):
            out.append(CheckResult("B/" + r.name, r.passed, r.margin, r.detail))
        elif r.name.startswith(("limit/R-", "monotone/R-")):
            out.append(CheckResult("D/" + r.name, r.passed, r.margin, r.detail))
    p = RegParams.from_beta(1e-2)
    phi = kernel_Phi(ts, lams[:-1], p)
    step = float(np.min(np.diff(phi, axis=0)))
    out.append(CheckResult("Phi-increasing-in-t", step > 0, step))
    huge = np.array([1e6, 1e9, 1e12])
    finite = True
    for variant in (KernelVariant.NEW_LINEAR, KernelVariant.SEMILINEAR, KernelVariant.QUASI_BOUNDARY, KernelVariant.TRUNCATION):
        fam_v = KernelFamily(variant)
        for beta in (1e-2, 1e-8):
            pv = RegParams.from_beta(beta)
            vals = [kernel_Q(fam_v, ts, huge, pv), kernel_R(fam_v, ts, huge, pv)]
            finite &= all(np.all(np.isfinite(v)) for v in vals)
    psi = kernel_Psi(1.0, np.linspace(0, 1, 5)[:, None], huge, RegParams.from_beta(1e-8))
    finite &= bool(np.all(np.isfinite(psi)))
    out.append(CheckResult("finite-up-to-1e12", bool(finite), 0.0 if finite else -math.inf))
    return out


def kernel_bound_checks(betas: Sequence[float] = (1e-2, 1e-4), horizon: float = 1.0) -> List[CheckResult]:
    """Uniform bounds on Phi and Psi over a 10 x 10 x 10 (t, s, lambda) grid."""
    t1 = np.linspace(0.0, horizon, 10)
    lams = np.logspace(0, 4, 10)
    T, S, L = np.meshgrid(t1, t1, lams, indexing="ij")
    keep = S <= T
    out = []
    for beta in betas:
        p = RegParams.from_beta(beta, horizon=horizon)
        lam1 = float(lams.min())
        phi_m = phi_bound(T, p) - kernel_Phi(T, L, p)
        psi_m = psi_bound(T[keep], S[keep], lam1, p) - kernel_Psi(T[keep], S[keep], L[keep], p)
        out.append(CheckResult(f"Phi-bound beta={beta:g}", bool(phi_m.min() >= 0), float(phi_m.min())))
        out.append(CheckResult(f"Psi-bound beta={beta:g}", bool(psi_m.min() >= 0), float(psi_m.min())))
    return out


def _three_mode_data() -> CauchyData:
    sys = EigenSystem(BasisKind.DIRICHLET_SINE, 3)
    return CauchyData.from_coeffs(sys, [1.0, 0.5, 0.25], [0.5, -0.25, 0.125])


def stability_checks(
    epsilon: float = 1e-2,
    m: float = 0.99,
    seeds: Sequence[int] = range(100),
    t_samples: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0),
) -> List[CheckResult]:
    """Regularized solutions from exact and noisy data stay within eps/beta."""
    data = _three_mode_data()
    p = RegParams(epsilon, m)
    fam = KernelFamily(KernelVariant.NEW_LINEAR)
    bound = stability_bound(p, data.system.lambda_1)
    worst = 0.0
    for seed in seeds:
        noisy = add_noise(data, epsilon, seed, NoiseModel.SCALAR_RAND)
        for t in t_samples:
            d = (regularized_solution(data, t, p, fam) - regularized_solution(noisy, t, p, fam)).norm()
            worst = max(worst, d)
    return [CheckResult(f"stability eps={epsilon:g}", worst <= bound, bound - worst, f"bound={bound:.4g}")]


def bound_test_problems() -> List[CauchyData]:
    """3-mode data in the sine basis (lambda_1 = 1), with and without velocity."""
    sys = EigenSystem(BasisKind.DIRICHLET_SINE, 3)
    return [
        _three_mode_data(),
        CauchyData.from_coeffs(sys, [0.0, 0.0, 0.0], [1.0, 0.3, -0.2]),
        CauchyData.from_coeffs(sys, [0.2, -0.1, 0.05], [0.0, 0.0, 0.0]),
    ]


def linear_bound_checks(
    case: str,
    eps_list: Sequence[float] = (1e-2, 1e-3, 1e-4),
    m_list: Sequence[float] = (0.5, 0.99),
    t_samples: Sequence[float] = tuple(np.linspace(0.05, 1.0, 20)),
    seeds: Sequence[int] = range(10),
) -> List[CheckResult]:
    out = []
    for k, data in enumerate(bound_test_problems()):
        for eps in eps_list:
            for m in m_list:
                rep = verify_theorem2(data, RegParams(eps, m), case, t_samples, seeds)
                out.append(CheckResult(
                    f"linear-bound-{case.upper()} problem={k} eps={eps:g} m={m:g}",
                    rep.passed,
                    rep.min_margin,
                ))
    return out


def log_rate_checks(
    eps_list: Sequence[float] = (1e-2, 1e-3, 1e-4, 1e-5),
    seeds: Sequence[int] = range(10),
    fit_t: float = 0.5,
    slope_tol: float = 0.15,
    cfg: MarchingConfig = MarchingConfig(),
) -> List[CheckResult]:
    from .experiments import example2_problem

    rep = verify_theorem8(example2_problem(), eps_list, seeds, cfg=cfg, fit_t=fit_t)
    ratio = max(float(np.max(rep.errors[e] / rep.bounds[e][None, :])) for e in rep.eps_list)
    gap = abs(rep.slope - rep.theoretical_slope)
    out = [
        CheckResult("log-rate-bound", rep.bound_holds, 1.0 - ratio, f"max_error/bound={ratio:.4g}"),
        CheckResult(
            f"log-rate-slope t={rep.fit_t:g}",
            gap <= slope_tol,
            slope_tol - gap,
            f"slope={rep.slope:.4f} theoretical={rep.theoretical_slope:.4f}",
        ),
    ]
    if rep.log_regime:
        out.append(CheckResult("log-rate-terminal-regime", True, 0.0, "t=T: bound decays only logarithmically"))
    return out


def contraction_checks(eps_list: Sequence[float] = (1e-2, 1e-4)) -> List[CheckResult]:
    """Picard iterates on the sine-Gordon problem contract with shrinking ratios."""
    from .experiments import example2_problem

    prob = example2_problem()
    cfg = MarchingConfig(mode=SolverMode.GLOBAL_PICARD)
    out = []
    for eps in eps_list:
        p = RegParams(eps)
        try:
            sol = picard_solve(add_noise(prob.data, eps, 0), prob.nonlinearity, p, cfg)
        except ConvergenceError as exc:
            out.append(CheckResult(f"contraction eps={eps:g}", False, -math.inf, str(exc)))
            continue
        trace = sol.meta["trace"]
        rep = contraction_diagnostics(trace, p, prob.nonlinearity)
        ratios = np.array(rep.ratios)
        decreasing = bool(ratios.size < 2 or np.all(np.diff(ratios) < 0))
        ok = rep.eventually_contracting and decreasing and trace.residual < 10 * cfg.picard_tol
        out.append(CheckResult(
            f"contraction eps={eps:g}",
            ok,
            1.0 - float(ratios[-1]) if ratios.size else 1.0,
            f"iterations={trace.iterations} m0={rep.m0} residual={trace.residual:.2e}",
        ))
    return out


def run_suite(name: str, case: str = "iii") -> List[CheckResult]:
    if name == "kernels":
        return kernel_property_checks() + kernel_bound_checks()
    if name == "theorem2":
        return linear_bound_checks(case)
    if name == "theorem8":
        return log_rate_checks()
    if name == "contraction":
        return contraction_checks()
    raise ValueError(f"unknown suite {name!r}")
