import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import erf

from sntrap.quadrature import ConvergenceError, McConfig, QuadResult, integrate_1d, integrate_mc


def _erf_kernel(u):
    u = np.asarray(u, dtype=float)
    small = u < 1e-4
    us = np.where(small, 1.0, u)
    ratio = np.where(small, math.sqrt(2 / math.pi) * (1 - 2 * u * u / 3), erf(math.sqrt(2) * us) / (2 * us))
    return np.exp(-u * u / 2) * ratio


@pytest.fixture(scope="module")
def trapezoid_oracle():
    # 1e7-point trapezoid on [0, 40] (integrand < 1e-300 beyond)
    u = np.linspace(0.0, 40.0, 10_000_001)
    y = _erf_kernel(u)
    h = u[1] - u[0]
    return h * (y.sum() - 0.5 * (y[0] + y[-1]))


def test_gaussian_half_line():
    res = integrate_1d(lambda u: np.exp(-u * u / 2), 0.0, np.inf, rel_tol=1e-13)
    assert abs(res.value - math.sqrt(math.pi / 2)) < 1e-12
    assert res.error_estimate >= 0 and res.evaluations > 0


def test_polynomial_example():
    res = integrate_1d(lambda z: -2 * z**2 + 1.5 * z**3 - 0.2 * z**5, 0.0, 1.0)
    assert res.value == pytest.approx(-0.325, abs=1e-14)


def test_erf_integral_against_trapezoid(trapezoid_oracle):
    res = integrate_1d(_erf_kernel, 0.0, np.inf, rel_tol=1e-12)
    assert abs(res.value - trapezoid_oracle) < 1e-9
    # closed form of the same integral
    assert res.value == pytest.approx(0.5 * math.asinh(2.0), rel=1e-12)


def test_whole_line_and_reversed_limits():
    res = integrate_1d(lambda x: np.exp(-x * x), -np.inf, np.inf, rel_tol=1e-12)
    assert res.value == pytest.approx(math.sqrt(math.pi), rel=1e-12)
    res = integrate_1d(lambda x: x, 1.0, 0.0)
    assert res.value == pytest.approx(-0.5)
    assert integrate_1d(np.sin, 2.0, 2.0).value == 0.0


def test_breakpoints_handle_kinks():
    res = integrate_1d(lambda x: np.abs(x - 0.3), 0.0, 1.0, rel_tol=1e-13, breakpoints=[0.3])
    assert res.value == pytest.approx(0.045 + 0.245, rel=1e-13)


def test_convergence_error_carries_estimate():
    with pytest.raises(ConvergenceError) as info:
        integrate_1d(lambda x: np.sin(1 / np.maximum(x, 1e-300)), 0.0, 1.0, rel_tol=1e-14, max_intervals=20)
    assert isinstance(info.value.result, QuadResult)
    assert math.isfinite(info.value.result.value)


def test_bad_tolerances():
    with pytest.raises(ValueError):
        integrate_1d(np.sin, 0, 1, rel_tol=0.0, abs_tol=0.0)
    with pytest.raises(ValueError):
        integrate_1d(np.sin, float("nan"), 1)


@given(st.floats(0.1, 10.0), st.floats(-3.0, 3.0))
def test_shifted_gaussians(a, mu):
    res = integrate_1d(lambda x: np.exp(-a * (x - mu) ** 2), -np.inf, np.inf, rel_tol=1e-11)
    assert res.value == pytest.approx(math.sqrt(math.pi / a), rel=1e-10)


# --- Monte Carlo ---------------------------------------------------------------

def test_mc_constant():
    cfg = McConfig(seed=1, max_samples=10_000, strata_per_dim=2, stratify_dims=(0, 1))
    res = integrate_mc(lambda x: np.ones(len(x)), [0] * 5, [1] * 5, cfg)
    assert res.value == pytest.approx(1.0, rel=1e-14)
    assert res.error_estimate == pytest.approx(0.0, abs=1e-14)


def _gauss_product(x):
    return np.exp(-x[:, 0] ** 2 - 0.5 * x[:, 1] ** 2) * (1 + x[:, 2]) * x[:, 3] ** 2 * np.cos(x[:, 4])


def test_mc_separable_product():
    lower, upper = [-5, -5, 0, 0, 0], [5, 5, 1, 1, 1]
    cfg = McConfig(seed=42, target_rel_error=2e-3, max_samples=4_000_000, strata_per_dim=16, stratify_dims=(0, 1))
    res = integrate_mc(_gauss_product, lower, upper, cfg)
    factors = [
        integrate_1d(lambda x: np.exp(-x * x), -5, 5, rel_tol=1e-13).value,
        integrate_1d(lambda x: np.exp(-0.5 * x * x), -5, 5, rel_tol=1e-13).value,
        integrate_1d(lambda x: 1 + x, 0, 1).value,
        integrate_1d(lambda x: x * x, 0, 1).value,
        integrate_1d(np.cos, 0, 1).value,
    ]
    truth = float(np.prod(factors))
    assert abs(res.value - truth) <= 3 * res.error_estimate
    assert res.error_estimate <= 2e-3 * abs(res.value)


def test_mc_deterministic_and_thread_independent():
    lower, upper = [-5, -5, 0, 0, 0], [5, 5, 1, 1, 1]
    base = dict(seed=99, target_rel_error=5e-3, max_samples=400_000, strata_per_dim=8, stratify_dims=(0, 1))
    a = integrate_mc(_gauss_product, lower, upper, McConfig(**base))
    b = integrate_mc(_gauss_product, lower, upper, McConfig(**base))
    c = integrate_mc(_gauss_product, lower, upper, McConfig(threads=4, **base))
    assert a == b == c
    d = integrate_mc(_gauss_product, lower, upper, McConfig(**{**base, "seed": 100}))
    assert d.value != a.value


def test_mc_budget_exhausted():
    cfg = McConfig(seed=3, target_rel_error=1e-9, max_samples=5_000, strata_per_dim=2, stratify_dims=(0,))
    with pytest.raises(ConvergenceError) as info:
        integrate_mc(lambda x: np.sin(7 * x[:, 0]) + 2, [0, 0], [1, 1], cfg)
    assert info.value.result.evaluations <= 5_000


def test_mc_config_validation():
    with pytest.raises(ValueError):
        McConfig(target_rel_error=0.0)
    with pytest.raises(ValueError):
        McConfig(max_samples=0)
    with pytest.raises(ValueError):
        McConfig(seed=-1)
    with pytest.raises(ValueError):
        integrate_mc(lambda x: x[:, 0], [0, 1], [1, 0])


def _random_case(rng):
    """Separable integrand on a random box with its exact integral."""
    k = int(rng.integers(1, 6))
    lo = rng.uniform(-2, 0, k)
    hi = lo + rng.uniform(0.5, 3, k)
    a = rng.uniform(0.2, 3, k)
    c = rng.uniform(-1, 1, k)

    def f(x):
        return np.prod(np.exp(-a * (x - c) ** 2), axis=1)

    exact = np.prod(
        0.5 * np.sqrt(np.pi / a) * (erf(np.sqrt(a) * (hi - c)) - erf(np.sqrt(a) * (lo - c)))
    )
    return f, lo, hi, float(exact)


@pytest.mark.slow
def test_mc_error_estimate_honesty():
    rng = np.random.default_rng(2024)
    covered = 0
    for i in range(200):
        f, lo, hi, exact = _random_case(rng)
        dims = tuple(range(min(2, len(lo))))
        cfg = McConfig(seed=i, target_rel_error=1e-2, max_samples=200_000, strata_per_dim=4,
                       stratify_dims=dims)
        try:
            res = integrate_mc(f, lo, hi, cfg)
        except ConvergenceError as exc:
            res = exc.result
        covered += abs(res.value - exact) <= 3 * res.error_estimate
    assert covered >= 198


def test_mc_budget_below_pilot_rejected():
    cfg = McConfig(seed=0, max_samples=100, strata_per_dim=8, stratify_dims=(0, 1))
    with pytest.raises(ValueError):
        integrate_mc(lambda x: x[:, 0], [0, 0], [1, 1], cfg)


@given(st.integers(130, 5000))
def test_mc_never_exceeds_budget(budget):
    cfg = McConfig(seed=budget, target_rel_error=1e-12, max_samples=budget, strata_per_dim=8, stratify_dims=(0, 1))
    try:
        res = integrate_mc(lambda x: np.exp(x[:, 0] * x[:, 1]), [0, 0], [1, 1], cfg)
    except ConvergenceError as exc:
        res = exc.result
    assert res.evaluations <= budget
