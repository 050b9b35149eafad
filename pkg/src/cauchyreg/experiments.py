"""Manufactured test problems, error metrics and convergence studies."""
from __future__ import annotations

import csv
import enum
import io
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .grid import GridSolution, fmt
from .kernels import KernelFamily, KernelVariant, RegParams
from .linear_solver import CauchyData, NoiseModel, add_noise, regularized_solution
from .semilinear_solver import (
    ZERO_NONLINEARITY,
    MarchingConfig,
    Nonlinearity,
    fit_loglog_slope,
    solve,
)
from .spectral_core import BasisKind, EigenSystem, SpectralVector, gauss_legendre, project

__all__ = [
    "GridSolution",
    "HChoice",
    "ManufacturedProblem",
    "example1_problem",
    "example2_problem",
    "linear3_problem",
    "get_problem",
    "PROBLEM_IDS",
    "exact_grid",
    "solve_problem",
    "ErrorReport",
    "error_metrics",
    "StudyRow",
    "StudyResult",
    "run_convergence_study",
    "atomic_write",
]


class HChoice(str, enum.Enum):
    POLY = "poly"
    COS_SUM = "cossum"


@dataclass(frozen=True)
class ManufacturedProblem:
    """A Cauchy problem with a closed-form solution.

    ``exact_coeffs(t)`` and ``exact_dcoeffs(t)`` return the spectral
    coefficients of u(t) and u_t(t). ``data`` holds the noise-free Cauchy data.
    """

    name: str
    data: CauchyData
    nonlinearity: Nonlinearity
    exact_coeffs: Callable[[float], np.ndarray]
    exact_dcoeffs: Callable[[float], np.ndarray]
    horizon: float = 1.0
    m_steps: int = 20
    k_steps: int = 20

    @property
    def system(self) -> EigenSystem:
        return self.data.system

    @property
    def is_linear(self) -> bool:
        return self.nonlinearity.lipschitz_k == 0

    def exact_at(self, t: float) -> SpectralVector:
        return SpectralVector(self.exact_coeffs(t), self.system)


def _h_poly(x):
    return x * x * (np.pi - x)


def _h_cossum(x):
    return sum(np.cos(k * x) / k for k in range(1, 4))


def example1_problem(h_choice: HChoice = HChoice.POLY, n_modes: int = 3) -> ManufacturedProblem:
    """Helmholtz-type problem ``u_tt + u_xx + u = 0`` with u(x, 1) = h(x).

    Mixed boundary conditions (u_x(0) = 0, u(pi) = 0) come from the
    mixed-cosine basis. The zeroth-order term is the source f(u) = u.
    """
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    h_choice = HChoice(h_choice)
    sys = EigenSystem(BasisKind.MIXED_COSINE, n_modes)
    h = _h_poly if h_choice is HChoice.POLY else _h_cossum
    h_p = project(sys, h, gauss_legendre(64, 0.0, np.pi)).coeffs
    w = np.sqrt(sys.eigenvalues + 1.0)

    def u(t):
        return np.cosh(t * w) / np.cosh(w) * h_p

    def du(t):
        return w * np.sinh(t * w) / np.cosh(w) * h_p

    data = CauchyData(SpectralVector(u(0.0), sys), SpectralVector.zeros(sys))
    f = Nonlinearity(lambda x, t, v: v, 1.0, time_dependent=False, name="identity")
    return ManufacturedProblem(f"example1-{h_choice.value}", data, f, u, du, 1.0, 20, 20)


def _sine_gordon_source(x, t, u):
    ts = t * np.sin(x)
    return np.sin(u) - np.sin(ts) - ts


def example2_problem(n_modes: int = 3) -> ManufacturedProblem:
    """Forced sine-Gordon problem with exact solution ``u = t sin x``."""
    sys = EigenSystem(BasisKind.DIRICHLET_SINE, n_modes)
    e1 = np.zeros(n_modes)
    e1[0] = math.sqrt(math.pi / 2)
    data = CauchyData(SpectralVector.zeros(sys), SpectralVector(e1, sys))
    f = Nonlinearity(_sine_gordon_source, 1.0, time_dependent=True, name="sine-gordon")
    return ManufacturedProblem("example2", data, f, lambda t: t * e1, lambda t: e1.copy(), 1.0, 60, 60)


def linear3_problem() -> ManufacturedProblem:
    """Homogeneous 3-mode problem (f = 0) for comparing kernel families."""
    sys = EigenSystem(BasisKind.DIRICHLET_SINE, 3)
    phi = np.array([1.0, 0.5, 0.25])
    g = np.array([0.5, -0.25, 0.125])
    x = sys.frequencies

    def u(t):
        return np.cosh(x * t) * phi + np.sinh(x * t) / x * g

    def du(t):
        return x * np.sinh(x * t) * phi + np.cosh(x * t) * g

    data = CauchyData(SpectralVector(phi, sys), SpectralVector(g, sys))
    return ManufacturedProblem("linear3", data, ZERO_NONLINEARITY, u, du, 1.0, 20, 20)


PROBLEM_IDS = ("example1", "example1-cossum", "example2", "linear3")


def get_problem(problem_id: str, n_modes: Optional[int] = None) -> ManufacturedProblem:
    if problem_id in ("example1", "example1-poly"):
        return example1_problem(HChoice.POLY, n_modes or 3)
    if problem_id == "example1-cossum":
        return example1_problem(HChoice.COS_SUM, n_modes or 3)
    if problem_id == "example2":
        return example2_problem(n_modes or 3)
    if problem_id == "linear3":
        if n_modes not in (None, 3):
            raise ValueError("linear3 has exactly 3 modes")
        return linear3_problem()
    raise ValueError(f"unknown problem {problem_id!r}; expected one of {', '.join(PROBLEM_IDS)}")


def exact_grid(problem: ManufacturedProblem, m_steps: int, k_steps: int) -> GridSolution:
    ts = np.linspace(0.0, problem.horizon, m_steps + 1)
    coeffs = np.array([problem.exact_coeffs(t) for t in ts])
    return GridSolution.from_coeffs(coeffs, ts, problem.system, k_steps, {"exact": True})


def solve_problem(
    problem: ManufacturedProblem,
    params: RegParams,
    cfg: MarchingConfig,
    seed: int,
    kernel: KernelFamily = KernelFamily(KernelVariant.SEMILINEAR),
    noise_model: NoiseModel = NoiseModel.SCALAR_RAND,
) -> GridSolution:
    """Noisy data at level ``params.epsilon``, then one regularized solve.

    Linear problems may use any kernel family; semilinear ones need the
    semilinear kernels.
    """
    noisy = add_noise(problem.data, params.epsilon, seed, noise_model)
    if kernel.variant is KernelVariant.SEMILINEAR:
        sol = solve(noisy, problem.nonlinearity, params, cfg)
    elif problem.is_linear:
        ts = np.linspace(0.0, params.horizon, cfg.m_steps + 1)
        coeffs = np.array([regularized_solution(noisy, t, params, kernel).coeffs for t in ts])
        sol = GridSolution.from_coeffs(coeffs, ts, problem.system, cfg.k_steps)
    else:
        raise ValueError(f"kernel {kernel.variant.value!r} applies only to linear problems")
    sol.meta.update({"seed": int(seed), "kernel": kernel.variant.value, "problem": problem.name})
    return sol


@dataclass
class ErrorReport:
    """Midpoint error E(t_i) and relative RMS error R(t_i) per time row.

    Where the exact row vanishes, R holds the absolute RMS and
    ``rrms_absolute`` is set for that row.
    """

    t_grid: np.ndarray
    midpoint_errors: np.ndarray
    rrms_errors: np.ndarray
    rrms_absolute: np.ndarray
    meta: Dict = field(default_factory=dict)


def error_metrics(exact: GridSolution, approx: GridSolution) -> ErrorReport:
    if not (np.array_equal(exact.t_grid, approx.t_grid) and np.array_equal(exact.x_grid, approx.x_grid)):
        raise ValueError("exact and approximate solutions live on different grids")
    mid = 0.5 * (exact.x_grid[0] + exact.x_grid[-1])
    E = np.abs(exact.at_x(mid) - approx.at_x(mid))
    diff = np.sqrt(np.sum((exact.values - approx.values) ** 2, axis=1))
    ref = np.sqrt(np.sum(exact.values**2, axis=1))
    zero = ref == 0
    R = np.where(zero, diff / math.sqrt(exact.x_grid.size), diff / np.where(zero, 1.0, ref))
    meta = {k: v for k, v in approx.meta.items() if k != "trace"}
    return ErrorReport(exact.t_grid.copy(), E, R, zero, meta)


@dataclass(frozen=True)
class StudyRow:
    epsilon: float
    m: float
    seed: int
    t: float
    E: float
    R: float


@dataclass
class StudyResult:
    problem: str
    eps_list: List[float]
    m: float
    seeds: List[int]
    horizon: float
    rows: List[StudyRow] = field(default_factory=list)
    failures: List[Dict] = field(default_factory=list)

    @property
    def t_values(self) -> List[float]:
        return sorted({r.t for r in self.rows})

    def median(self, metric: str, eps: float, t: float) -> float:
        vals = [getattr(r, metric) for r in self.rows if r.epsilon == eps and r.t == t]
        return float(np.median(vals)) if vals else math.nan

    def median_table(self, metric: str = "E") -> Dict[float, np.ndarray]:
        """eps -> medians over seeds, ordered like :attr:`t_values`."""
        return {e: np.array([self.median(metric, e, t) for t in self.t_values]) for e in self.eps_list}

    def slopes(self, metric: str = "E") -> List[Dict]:
        """Per-t log-log slope of the seed-median error against eps.

        Only eps > 0 with positive medians enter the fit; fewer than two
        usable points give NaN.
        """
        out = []
        for t in self.t_values:
            pts = [(e, self.median(metric, e, t)) for e in self.eps_list if e > 0]
            pts = [(e, v) for e, v in pts if v > 0 and math.isfinite(v)]
            slope = fit_loglog_slope(*zip(*pts)) if len(pts) >= 2 else math.nan
            out.append({
                "t": t,
                "slope": slope,
                "theoretical": self.m * (self.horizon - t) / self.horizon,
                "n_eps": len(pts),
            })
        return out

    def to_csv(self, header_comment: Optional[str] = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\r\n")
        w = csv.writer(buf)
        w.writerow(["epsilon", "m", "seed", "t", "E", "R"])
        for r in self.rows:
            w.writerow([fmt(r.epsilon), fmt(r.m), r.seed, fmt(r.t), fmt(r.E), fmt(r.R)])
        return buf.getvalue()

    def summary_csv(self, header_comment: Optional[str] = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\r\n")
        w = csv.writer(buf)
        w.writerow(["t", "slope", "theoretical_slope", "n_eps"])
        for s in self.slopes():
            w.writerow([fmt(s["t"]), fmt(s["slope"]), fmt(s["theoretical"]), s["n_eps"]])
        return buf.getvalue()


def _worker_count(requested: Optional[int]) -> int:
    cap = os.environ.get("CAUCHYREG_THREADS")
    n = requested or os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def run_convergence_study(
    problem: ManufacturedProblem,
    eps_list: Sequence[float],
    m: float,
    seeds: Sequence[int],
    cfg: MarchingConfig,
    kernel: KernelFamily = KernelFamily(KernelVariant.SEMILINEAR),
    workers: Optional[int] = None,
) -> StudyResult:
    """Solve every (eps, seed) cell and collect per-time error rows.

    Cells are independent and may run on a thread pool; rows are assembled
    in (eps, seed, t) order regardless of completion order. A failing cell
    is recorded in ``failures`` and the study continues.
    """
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise ValueError("eps_list is empty")
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("seed list is empty")
    exact = exact_grid(problem, cfg.m_steps, cfg.k_steps)
    cells = [(e, s) for e in eps_list for s in seeds]

    def run(cell):
        eps, seed = cell
        try:
            sol = solve_problem(problem, RegParams(eps, m, problem.horizon), cfg, seed, kernel)
            return error_metrics(exact, sol)
        except (ArithmeticError, RuntimeError, ValueError) as exc:
            return exc

    n = min(_worker_count(workers), len(cells))
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            outcomes = list(pool.map(run, cells))
    else:
        outcomes = [run(c) for c in cells]

    result = StudyResult(problem.name, eps_list, m, seeds, problem.horizon)
    for (eps, seed), out in zip(cells, outcomes):
        if isinstance(out, Exception):
            result.failures.append({"epsilon": eps, "seed": seed, "error": type(out).__name__, "message": str(out)})
            continue
        for t, E, R in zip(out.t_grid, out.midpoint_errors, out.rrms_errors):
            result.rows.append(StudyRow(eps, m, seed, float(t), float(E), float(R)))
    return result


def atomic_write(path: str, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
