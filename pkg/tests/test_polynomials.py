import math
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from sntrap.polynomials import (
    P_MAX,
    dip_points,
    gaussian_moment,
    hermite,
    hermite_functions,
    p_polynomial,
    pair_density,
    wide_coefficient,
)
from sntrap.quadrature import integrate_1d

F_TABLE = [Fraction(1), Fraction(3, 4), Fraction(41, 64), Fraction(147, 256),
           Fraction(8649, 16384), Fraction(32307, 65536)]


def test_hermite_examples():
    assert hermite(0).coeffs == (1,)
    assert hermite(1).coeffs == (0, 2)
    assert hermite(2).coeffs == (-2, 0, 4)


def test_hermite_recurrence_and_structure():
    for n in range(1, 30):
        h_next, h, h_prev = hermite(n + 1).coeffs, hermite(n).coeffs, hermite(n - 1).coeffs
        rhs = [0] * (n + 2)
        for k, c in enumerate(h):
            rhs[k + 1] += 2 * c
        for k, c in enumerate(h_prev):
            rhs[k] -= 2 * n * c
        assert list(h_next) == rhs
        assert h[-1] == 2**n
        assert all(c == 0 for k, c in enumerate(h) if (k - n) % 2)


def test_hermite_matches_sympy():
    x = sp.Symbol("x")
    for n in (3, 7, 12):
        ref = sp.Poly(sp.hermite(n, x), x).all_coeffs()[::-1]
        assert list(hermite(n).coeffs) == [int(c) for c in ref]


def test_hermite_range():
    with pytest.raises(ValueError):
        hermite(31)
    with pytest.raises(ValueError):
        p_polynomial(P_MAX + 1)


def test_p_examples():
    assert p_polynomial(0).coeffs == (Fraction(1),)
    assert p_polynomial(1).at(Fraction(0)) == Fraction(3, 4)
    assert p_polynomial(2).at(0) == Fraction(41, 64)


def test_wide_bridge():
    for n, f in enumerate(F_TABLE):
        assert wide_coefficient(n) == f


@pytest.mark.parametrize("n", range(0, 5))
def test_p_matches_symbolic_integration(n):
    # independent route: integrate the raw defining integrand symbolically
    xi, z = sp.symbols("xi z", real=True)
    H = sp.hermite
    norm = 2**n * sp.factorial(n)
    integrand = sp.exp(-2 * xi**2 - 2 * z * xi) * H(n, xi) ** 2 * H(n, xi + z) ** 2
    val = sp.integrate(sp.expand(integrand), (xi, -sp.oo, sp.oo))
    # both halves of the symmetric definition contribute equally
    expr = sp.simplify(2 * sp.exp(-z**2 / 2) * val / (sp.sqrt(2 * sp.pi) * norm**2))
    poly = sp.Poly(sp.expand(expr), z)
    assert poly.degree() == 4 * n
    got = p_polynomial(n).full_coeffs()
    ref = [sp.Rational(c) for c in poly.all_coeffs()[::-1]]
    assert [Fraction(int(r.p), int(r.q)) for r in ref] == list(got)


def test_moments_exact():
    for n in range(11):
        p = p_polynomial(n)
        assert gaussian_moment(p, 0) == 1
        assert gaussian_moment(p, 2) == 2 * n + 1
    with pytest.raises(ValueError):
        gaussian_moment(p_polynomial(1), 3)


def test_p_even_and_positive_leading():
    for n in range(P_MAX + 1):
        p = p_polynomial(n)
        assert p.degree == 4 * n
        assert p.coeffs[-1] != 0
        assert all(c == 0 for c in p.full_coeffs()[1::2])


@pytest.mark.parametrize("n", range(0, 7))
def test_p_against_numeric_defining_integral(n):
    rng = np.random.default_rng(100 + n)
    H = np.polynomial.hermite.Hermite.basis(n)
    norm = (2.0**n * math.factorial(n)) ** 2
    for z in rng.uniform(0.0, 4.0, 5):
        def f(x, z=z):
            # first half of the symmetric definition, times two
            return np.exp(-2 * x * x + 2 * z * x - z * z / 2) * H(x) ** 2 * H(x - z) ** 2
        res = integrate_1d(f, -np.inf, np.inf, rel_tol=1e-13)
        num = 2.0 * res.value / (math.sqrt(2 * math.pi) * norm)
        assert p_polynomial(n)(z) == pytest.approx(num, rel=1e-10)


@given(st.integers(0, P_MAX), st.floats(0.0, 8.0))
def test_pair_density_matches_polynomial(n, u):
    exact = math.sqrt(2 / math.pi) * math.exp(-u * u / 2) * float(p_polynomial(n).at(Fraction(u)))
    assert pair_density(n, u) == pytest.approx(exact, rel=1e-9, abs=1e-300)


def test_pair_density_normalised_and_finite_far_out():
    for n in (0, 5, 14):
        res = integrate_1d(lambda u: pair_density(n, u), 0.0, np.inf, rel_tol=1e-12)
        assert res.value == pytest.approx(1.0, rel=1e-10)
    assert np.isfinite(pair_density(14, 60.0))


def test_hermite_functions_orthonormal():
    x, w = np.polynomial.hermite.hermgauss(80)
    psi = hermite_functions(20, x) * np.exp(x * x / 2)
    gram = (psi * w) @ psi.T
    assert np.allclose(gram, np.eye(21), atol=1e-12)


def test_dip_points_are_local_minima():
    for n in (2, 5, 10):
        dips = dip_points(n)
        assert len(dips) == n
        for d in dips:
            vals = pair_density(n, np.array([d - 0.1, d, d + 0.1]))
            assert vals[1] < max(vals[0], vals[2])
    assert dip_points(0) == ()
