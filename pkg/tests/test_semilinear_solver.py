import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cauchyreg.errors import ConvergenceError
from cauchyreg.experiments import example1_problem, example2_problem
from cauchyreg.kernels import RegParams, kernel_Psi
from cauchyreg.linear_solver import CauchyData, add_noise
from cauchyreg.semilinear_solver import (
    ZERO_NONLINEARITY,
    MarchingConfig,
    Nonlinearity,
    SolverMode,
    compute_P_constant,
    contraction_diagnostics,
    fit_loglog_slope,
    free_part,
    march_solve,
    mp_functional,
    picard_solve,
    stability_bound_semilinear,
    log_rate_bound,
    log_rate_constant,
    verify_theorem8,
)
from cauchyreg.spectral_core import BasisKind, EigenSystem, SpectralVector, basis_matrix, gauss_legendre

SINE3 = EigenSystem(BasisKind.DIRICHLET_SINE, 3)
EX2 = example2_problem()
PICARD = MarchingConfig(mode=SolverMode.GLOBAL_PICARD)
SIN = Nonlinearity(lambda x, t, u: np.sin(u), 1.0, False, "sin")


@given(
    w1=st.lists(st.floats(-50, 50), min_size=8, max_size=8),
    w2=st.lists(st.floats(-50, 50), min_size=8, max_size=8),
    t=st.floats(0, 1),
)
def test_sine_lipschitz(w1, w2, t):
    a, b = np.array(w1), np.array(w2)
    x = np.linspace(0, math.pi, 8)
    assert np.linalg.norm(SIN(x, t, a) - SIN(x, t, b)) <= SIN.lipschitz_k * np.linalg.norm(a - b) + 1e-12


@given(
    w1=st.lists(st.floats(-1, 1), min_size=8, max_size=8),
    w2=st.lists(st.floats(-1, 1), min_size=8, max_size=8),
)
def test_allen_cahn_local_lipschitz(w1, w2):
    # On |u| <= 1 the derivative 1 - 3u^2 lies in [-2, 1].
    f = Nonlinearity(lambda x, t, u: u - u**3, 2.0, False, "allen-cahn")
    a, b = np.array(w1), np.array(w2)
    assert np.linalg.norm(f(0.0, 0.0, a) - f(0.0, 0.0, b)) <= 2.0 * np.linalg.norm(a - b) + 1e-12


def test_sine_gordon_source_lipschitz_is_one():
    f = EX2.nonlinearity
    rng = np.random.default_rng(0)
    x = np.linspace(0, math.pi, 33)
    for _ in range(50):
        a, b = rng.normal(size=33) * 3, rng.normal(size=33) * 3
        assert np.linalg.norm(f(x, 0.4, a) - f(x, 0.4, b)) <= np.linalg.norm(a - b) + 1e-12


@pytest.mark.parametrize("field", ["m_steps", "k_steps", "quad_time_order", "quad_space_order", "picard_max_iter"])
def test_config_rejects_non_positive(field):
    with pytest.raises(ValueError):
        MarchingConfig(**{field: 0})
    with pytest.raises(ValueError):
        MarchingConfig(picard_tol=0.0)
    assert MarchingConfig(mode="picard").mode is SolverMode.GLOBAL_PICARD


def test_mp_functional():
    sys = EigenSystem(BasisKind.DIRICHLET_SINE, 2)  # lambda_2 = 4
    w1 = SpectralVector([0.3, 1.0], sys)
    w2 = SpectralVector([0.7, 2.0], sys)
    assert mp_functional(w1, SpectralVector.zeros(sys), 1) == 0.3
    assert mp_functional(w1, w2, 2) == 2.0
    assert mp_functional(w1, -w2, 2) == 0.0
    with pytest.raises(IndexError):
        mp_functional(w1, w2, 3)
    with pytest.raises(ValueError):
        mp_functional(w1, SpectralVector.zeros(EigenSystem(BasisKind.MIXED_COSINE, 2)), 1)


def _closed_form(data, params, ts):
    x = data.system.frequencies
    T = params.horizon
    out = []
    for t in ts:
        phi_k = np.exp(-x * (T - t)) / (2 * params.beta * x + 2 * np.exp(-x * T))
        mp = data.phi.coeffs + data.g.coeffs / x
        mm = data.phi.coeffs - data.g.coeffs / x
        out.append(phi_k * mp + 0.5 * np.exp(-x * t) * mm)
    return np.array(out)


@pytest.mark.parametrize("eps", [1e-2, 1e-5])
def test_picard_zero_source_is_closed_form(eps):
    data = add_noise(CauchyData.from_coeffs(SINE3, [1.0, -0.5, 0.2], [0.3, 0.1, -0.4]), eps, 1)
    p = RegParams(eps)
    sol = picard_solve(data, ZERO_NONLINEARITY, p, PICARD)
    np.testing.assert_allclose(sol.coeffs, _closed_form(data, p, sol.t_grid), atol=1e-10)
    assert sol.meta["trace"].iterations == 1


def test_picard_zero_data_zero_solution():
    zero = CauchyData(SpectralVector.zeros(SINE3), SpectralVector.zeros(SINE3))
    sol = picard_solve(zero, ZERO_NONLINEARITY, RegParams(1e-3), PICARD)
    assert not np.any(sol.values)


def test_picard_example2_error_scale():
    eps = 1e-4
    errs = []
    for seed in range(10):
        sol = picard_solve(add_noise(EX2.data, eps, seed), EX2.nonlinearity, RegParams(eps), PICARD)
        i = np.argmin(np.abs(sol.t_grid - 0.5))
        errs.append(abs(sol.at_x(math.pi / 2)[i] - 0.5))
    # Within the scale of the reference midpoint error 8.2e-4.
    assert np.median(errs) < 3 * 0.000817994686682


def test_picard_residual_and_noise_free_exactness():
    sol = picard_solve(EX2.data, EX2.nonlinearity, RegParams(0.0), PICARD)
    trace = sol.meta["trace"]
    assert trace.converged and trace.residual < 10 * PICARD.picard_tol
    exact = np.outer(sol.t_grid, np.sin(sol.x_grid))
    assert np.max(np.abs(sol.values - exact)) < 1e-10


def test_picard_non_convergence_raises_with_ratio():
    cfg = MarchingConfig(mode=SolverMode.GLOBAL_PICARD, picard_max_iter=3, picard_tol=1e-30)
    with pytest.raises(ConvergenceError) as info:
        picard_solve(add_noise(EX2.data, 1e-2, 0), EX2.nonlinearity, RegParams(1e-2), cfg)
    assert 0 < info.value.last_ratio < 1
    assert info.value.trace.iterations == 3


def test_march_initial_slice_is_noisy_phi():
    noisy = add_noise(EX2.data, 1e-2, 4)
    sol = march_solve(noisy, EX2.nonlinearity, RegParams(1e-2), MarchingConfig())
    np.testing.assert_allclose(sol.values[0], basis_matrix(SINE3, sol.x_grid) @ noisy.phi.coeffs, atol=1e-15)


def test_march_closed_form_integrals_match_quadrature():
    ex1 = example1_problem()
    f_frozen = ex1.nonlinearity
    f_quad = Nonlinearity(f_frozen.func, f_frozen.lipschitz_k, True, "identity-quadrature")
    p = RegParams(1e-3)
    cfg = MarchingConfig(m_steps=20, k_steps=20)
    a = march_solve(ex1.data, f_frozen, p, cfg)
    b = march_solve(ex1.data, f_quad, p, cfg)
    np.testing.assert_allclose(a.coeffs, b.coeffs, rtol=1e-11, atol=1e-13)


def test_psi_antiderivative_matches_kernel_quadrature():
    """Exact s-integral of Psi over a subinterval, as used by the marching scheme."""
    p = RegParams(1e-2)
    for lam in (0.25, 2.25, 6.25):
        x = math.sqrt(lam)
        a, b, t = 0.2, 0.35, 0.8
        q = gauss_legendre(20, a, b)
        ref = q.integrate(kernel_Psi(t, q.nodes, lam, p))
        den = 2 * p.beta * x + 2 * math.exp(-x)
        closed = (math.exp(-x * (1 + a - t)) - math.exp(-x * (1 + b - t))) / (x * x * den)
        assert closed == pytest.approx(ref, rel=1e-13)
        # Same integral in the unnormalized cosine basis, p = x + 1/2.
        pp = x + 0.5
        cosine_basis_form = (4 / (math.pi * (1 - 2 * pp))) * (
            math.exp(-(pp - 0.5) * (1 + b - t)) - math.exp(-(pp - 0.5) * (1 + a - t))
        ) / (2 * p.beta * (pp - 0.5) ** 2 + (2 * pp - 1) * math.exp(-(pp - 0.5)))
        assert cosine_basis_form == pytest.approx(closed * 2 / math.pi, rel=1e-12)


def test_march_agrees_with_picard():
    eps = 1e-4
    noisy = add_noise(EX2.data, eps, 0)
    cfg = MarchingConfig(m_steps=60, k_steps=60)
    a = march_solve(noisy, EX2.nonlinearity, RegParams(eps), cfg)
    b = picard_solve(noisy, EX2.nonlinearity, RegParams(eps), PICARD)
    assert np.max(np.abs(a.values - b.values)) < 5 * (1.0 / 60)


def test_march_first_order_refinement():
    sols = []
    for M in (15, 30, 60):
        s = march_solve(EX2.data, EX2.nonlinearity, RegParams(1e-4), MarchingConfig(m_steps=M, k_steps=60))
        sols.append(s.coeffs[:: M // 15])
    d1 = np.max(np.abs(sols[0] - sols[1]))
    d2 = np.max(np.abs(sols[1] - sols[2]))
    assert 1.5 <= d1 / d2 <= 3.0


@pytest.mark.parametrize("mode", list(SolverMode))
def test_solvers_are_deterministic(mode):
    cfg = MarchingConfig(m_steps=20, k_steps=20, mode=mode)
    runs = [
        (march_solve if mode is SolverMode.TIME_MARCHING else picard_solve)(
            add_noise(EX2.data, 1e-3, 9), EX2.nonlinearity, RegParams(1e-3), cfg
        )
        for _ in range(2)
    ]
    assert runs[0].values.tobytes() == runs[1].values.tobytes()


@given(s1=st.integers(0, 10**6), s2=st.integers(0, 10**6), t_index=st.integers(0, 20))
def test_fixed_point_stability_between_noise_draws(s1, s2, t_index):
    eps = 1e-3
    p = RegParams(eps)
    cfg = MarchingConfig(m_steps=20, k_steps=20, quad_time_order=8, mode=SolverMode.GLOBAL_PICARD)
    a = picard_solve(add_noise(EX2.data, eps, s1), EX2.nonlinearity, p, cfg)
    b = picard_solve(add_noise(EX2.data, eps, s2), EX2.nonlinearity, p, cfg)
    t = a.t_grid[t_index]
    # Two draws are each within eps of the data, hence 2 eps apart.
    bound = stability_bound_semilinear(t, p, 1.0, SINE3.lambda_1) * 2
    assert np.linalg.norm(a.coeffs[t_index] - b.coeffs[t_index]) <= bound


def test_free_part_at_zero_beta_returns_data():
    data = CauchyData.from_coeffs(SINE3, [1.0, 2.0, 3.0], [0.5, 0.5, 0.5])
    np.testing.assert_allclose(free_part(data, RegParams(0.0), [0.0])[0], data.phi.coeffs, atol=1e-15)


def test_contraction_zero_source():
    zero = CauchyData(SpectralVector.zeros(SINE3), SpectralVector.zeros(SINE3))
    sol = picard_solve(zero, ZERO_NONLINEARITY, RegParams(1e-2), PICARD)
    rep = contraction_diagnostics(sol.meta["trace"], RegParams(1e-2), ZERO_NONLINEARITY)
    assert rep.converged_in == 1 and rep.ratios == [] and rep.m0 == 1


def test_contraction_factor_sequence():
    from cauchyreg.semilinear_solver import PicardTrace

    trace = PicardTrace(diffs=[1.0, 0.5, 0.2], lambda_1=1.0, horizon=1.0)
    p = RegParams.from_beta(0.1)
    rep = contraction_diagnostics(trace, p, SIN, n_factors=5)
    for m, f in enumerate(rep.factors, start=1):
        assert f == pytest.approx(math.sqrt(100.0**m / math.factorial(m)), rel=1e-9)
    # Brute-force oracle for the first m with 100^m < m!.
    m, log_fact = 1, 0.0
    while True:
        log_fact += math.log(m)
        if m * math.log(100.0) < log_fact:
            break
        m += 1
    assert rep.m0 == m
    assert rep.ratios == [0.5, 0.4]
    assert rep.eventually_contracting


def test_contraction_without_regularization_has_no_m0():
    from cauchyreg.semilinear_solver import PicardTrace

    rep = contraction_diagnostics(PicardTrace(diffs=[1.0]), RegParams(0.0), SIN)
    assert rep.m0 is None


def test_example2_ratios_decrease():
    sol = picard_solve(add_noise(EX2.data, 1e-2, 0), EX2.nonlinearity, RegParams(1e-2), PICARD)
    rep = contraction_diagnostics(sol.meta["trace"], RegParams(1e-2), EX2.nonlinearity)
    assert len(rep.ratios) >= 2
    assert np.all(np.diff(rep.ratios) < 0)
    assert rep.ratios[-1] < 1


def _sv(coeffs):
    return SpectralVector(coeffs, EigenSystem(BasisKind.DIRICHLET_SINE, 1))


def test_P_constant_zero():
    z = lambda t: _sv([0.0])
    assert compute_P_constant(z, z, RegParams(1e-2)) == 0.0


def test_P_constant_example2_single_mode():
    c = math.sqrt(math.pi / 2)
    P = compute_P_constant(lambda t: _sv([t * c]), lambda t: _sv([c]), RegParams(1e-2))
    dense = np.linspace(0, 1, 100_001)
    oracle = 4 * np.max(np.exp(1 - dense) * (dense + 1) ** 2 * math.pi / 2)
    assert P == pytest.approx(oracle, rel=1e-12)
    assert P == pytest.approx(8 * math.pi, rel=1e-12)


def test_P_constant_quadratic_scaling():
    c = math.sqrt(math.pi / 2)
    P1 = compute_P_constant(lambda t: _sv([t * c]), lambda t: _sv([c]), RegParams(1e-2))
    P2 = compute_P_constant(lambda t: _sv([2 * t * c]), lambda t: _sv([2 * c]), RegParams(1e-2))
    assert P2 == pytest.approx(4 * P1, rel=1e-11)


def test_log_rate_bound_limits():
    P, K, lam1 = 25.0, 1.0, 1.0
    vals = [log_rate_bound(0.5, RegParams(10.0**-k), P, K, lam1) for k in range(2, 14, 2)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-4
    p = RegParams(1e-4)
    Q = log_rate_constant(1.0, P, K, lam1, 1.0)
    assert log_rate_bound(1.0, p, P, K, lam1) == pytest.approx(Q / math.log(1 / p.beta), rel=1e-12)


def test_verify_theorem8_flags_terminal_regime():
    rep = verify_theorem8(EX2, [1e-2, 1e-3], [0, 1], cfg=MarchingConfig(m_steps=20, k_steps=20), fit_t=1.0)
    assert rep.log_regime
    assert rep.theoretical_slope == 0.0
    assert rep.bound_holds


def test_fit_loglog_slope_exact_power():
    eps = np.array([1e-2, 1e-3, 1e-4])
    assert fit_loglog_slope(eps, 3 * eps**0.7) == pytest.approx(0.7, rel=1e-12)
