import math
import warnings

import numpy as np
import pytest

from sntrap import constants
from sntrap.params import DomainError, Lattice, crystal_params, sn_frequency_squared, spectral_prefactor
from sntrap.spectrum import (
    RegimeWarning,
    SpectrumQuery,
    UnsupportedRegimeError,
    default_packing,
    energy_shift_narrow,
    f_n_full,
    f_n_intermediate,
    f_n_lattice,
    f_n_narrow,
    narrow_transition_coefficient,
    split_terms,
    sweep_spectrum,
    transition_energy,
    wide_coefficients,
    wide_log_slope,
)

from conftest import OMEGA0, params_at_alpha

SQ = math.sqrt(2 / math.pi)


def diff(n, alpha, family="sphere", **kw):
    return f_n_intermediate(n + 1, alpha, family, **kw).total - f_n_intermediate(n, alpha, family, **kw).total


@pytest.mark.parametrize("n", [0, 3, 9])
@pytest.mark.parametrize("alpha", [0.4, 3.0, 40.0])
def test_unit_kernel_gives_alpha_squared(n, alpha):
    val = f_n_full(n, alpha, 1e4, kernel=lambda z: np.ones_like(z))
    assert val.total == pytest.approx(alpha**2, rel=1e-10)


@pytest.mark.parametrize("alpha", [1.0, 2.0, 5.0, 10.0])
def test_full_matches_intermediate_with_mutual_term(alpha):
    pk = default_packing()
    for n in range(1, 4):
        full = f_n_full(n, alpha, 1e4).total - f_n_full(0, alpha, 1e4).total
        inter = (f_n_intermediate(n, alpha, packing=pk).total - f_n_intermediate(0, alpha, packing=pk).total)
        assert inter == pytest.approx(full, rel=1e-3)


def test_intermediate_example_at_alpha_ten():
    full = f_n_full(1, 10.0, 1e4).total - f_n_full(0, 10.0, 1e4).total
    assert diff(0, 10.0) == pytest.approx(full, rel=0.01)


def test_gaussian_full_matches_intermediate():
    for alpha in (1.0, 4.0):
        full = f_n_full(2, alpha, 1e4, "gaussian").total - f_n_full(0, alpha, 1e4, "gaussian").total
        pk = default_packing()
        inter = (f_n_intermediate(2, alpha, "gaussian", packing=pk).total
                 - f_n_intermediate(0, alpha, "gaussian", packing=pk).total)
        assert inter == pytest.approx(full, rel=1e-3)


@pytest.mark.parametrize("family", ["sphere", "gaussian"])
def test_regime_consistency(family):
    limit = narrow_transition_coefficient(0, 1, family)
    for n in range(4):
        gaps = [abs(diff(n, a, family) - limit) for a in (20.0, 50.0, 100.0)]
        assert gaps[0] > gaps[1] > gaps[2]


def test_narrow_limit_coefficients():
    assert narrow_transition_coefficient(0, 1, "sphere") == -4.0
    assert narrow_transition_coefficient(0, 1, "gaussian") == pytest.approx(-4 / 3 * SQ)
    assert 4 / 3 * SQ == pytest.approx(1.0638, abs=1e-4)


def test_narrow_form_differences():
    lat = Lattice(N=1e12, varrho=1e4)
    a, b = f_n_narrow(0, 50.0, lat), f_n_narrow(1, 50.0, lat)
    assert b.total - a.total == pytest.approx(-4.0 * lat.gamma(2) / 1.0 * 1.0, rel=1e-12)


def test_degeneracy_split_at_alpha_two():
    for family, lo, hi in (("sphere", 0.3, 3.0), ("gaussian", 0.03, 0.3)):
        vals = [f_n_intermediate(n, 2.0, family) for n in range(4)]
        d = [vals[k + 1].total - vals[k].total for k in range(3)]
        errs = [vals[k + 1].error + vals[k].error for k in range(3)]
        for i in range(3):
            for j in range(i + 1, 3):
                assert abs(d[i] - d[j]) > 10 * (errs[i] + errs[j])
        assert lo < abs(d[0] - d[1]) < hi


def test_curves_converge_for_large_alpha():
    for family in ("sphere", "gaussian"):
        spread = []
        for a in (5.0, 20.0, 100.0):
            d = [diff(n, a, family) for n in range(4)]
            spread.append(max(d) - min(d))
        assert spread[0] > spread[1] > spread[2]


def test_truncated_retention_drops_self_constant():
    terms = split_terms(2, 3.0)
    trunc = f_n_intermediate(2, 3.0, retention="truncated").total
    comp = f_n_intermediate(2, 3.0, retention="complete").total
    assert trunc == pytest.approx(terms["f1"][0] + terms["f4"][0], rel=1e-12)
    assert comp == pytest.approx(trunc + terms["f_self"][0], rel=1e-9)
    with pytest.raises(ValueError):
        f_n_intermediate(0, 3.0, retention="other")


def test_intermediate_range_warning():
    with pytest.warns(RegimeWarning):
        f_n_intermediate(0, 0.1)
    with pytest.raises(DomainError):
        f_n_intermediate(0, -1.0)


def test_wide_coefficient_examples():
    assert wide_coefficients(0) == 1
    assert str(wide_coefficients(3)) == "147/256"
    assert str(wide_coefficients(5)) == "32307/65536"


def test_wide_log_slope_ratios():
    lat = Lattice(N=5.0, varrho=5.0)
    alphas = np.geomspace(1e-3, 1e-2, 5)
    s0 = wide_log_slope(0, alphas, lat)
    assert s0 == pytest.approx(-(lat.N + 1) / math.sqrt(2 * math.pi), rel=0.01)
    for n in range(1, 6):
        assert wide_log_slope(n, alphas, lat) / s0 == pytest.approx(float(wide_coefficients(n)), rel=0.02)


def test_lattice_integral_consistent_with_split_form():
    lat = Lattice(N=1e6, varrho=100.0)
    a = f_n_lattice(1, 3.0, lat).total
    b = f_n_full(1, 3.0, lat.varrho, N=lat.N).total
    assert a == pytest.approx(b, rel=1e-9)


def test_prefactors(silicon, osmium):
    assert spectral_prefactor(silicon, 1.0) == pytest.approx(0.0023, abs=5e-5)
    ratio = spectral_prefactor(osmium, 1.0) / spectral_prefactor(silicon, 1.0)
    assert 50 <= ratio <= 500


def test_narrow_shift_spacing(si_params):
    p = si_params
    w2 = sn_frequency_squared(p.material)
    for n in (0, 3, 7):
        d = energy_shift_narrow(n + 1, p, OMEGA0) - energy_shift_narrow(n, p, OMEGA0)
        assert d == pytest.approx(constants.HBAR * w2 / OMEGA0, rel=1e-9)
    assert energy_shift_narrow(2, p, OMEGA0, G=0.0) == 0.0
    assert w2 / OMEGA0**2 == pytest.approx(2.3e-6, rel=0.02)


def test_transition_energy_without_gravity(silicon):
    p = params_at_alpha(silicon, 3.0)
    for regime in ("intermediate", "full", "narrow"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RegimeWarning)
            t = transition_energy(1, 4, SpectrumQuery(p, 3.0, regime=regime, G=0.0))
        assert t.value == 3.0
        assert t.gravitational_part == 0.0


def test_transition_energy_matches_prefactor(silicon):
    p = params_at_alpha(silicon, 10.0)
    q = SpectrumQuery(p, 10.0)
    t = transition_energy(0, 1, q)
    assert q.omega0 == pytest.approx(OMEGA0, rel=1e-12)
    pref = spectral_prefactor(silicon, OMEGA0)
    assert t.gravitational_part == pytest.approx(-pref * diff(0, 10.0), rel=1e-12)
    assert t.value == pytest.approx(1.0 + t.gravitational_part, rel=1e-15)
    with pytest.raises(DomainError):
        transition_energy(2, 1, q)


def test_semi_wide_unsupported(si_params):
    with pytest.raises(UnsupportedRegimeError):
        SpectrumQuery(si_params, 1.0, regime="semi-wide")
    with pytest.raises(DomainError):
        SpectrumQuery(si_params, 1.0, regime="bogus")


def test_wide_regime_warning_and_formula(silicon):
    small = crystal_params(silicon, 1e4 * constants.AMU)
    q = SpectrumQuery(small, 1e-3, regime="wide")
    with warnings.catch_warnings():
        warnings.simplefilter("error", RegimeWarning)
        t = transition_energy(0, 1, q)
    pref = constants.G * math.sqrt(2 * small.m**5 / (math.pi * constants.HBAR**3 * q.omega0))
    assert t.gravitational_part == pytest.approx(pref * math.log(1e-3) * (0.75 - 1.0), rel=1e-12)
    assert t.gravitational_part > 0
    big = params_at_alpha(silicon, 1.0)
    with pytest.warns(RegimeWarning):
        transition_energy(0, 1, SpectrumQuery(big, 1.0, regime="wide"))


def test_sweep_single_point_and_columns():
    res = sweep_spectrum([3.0], family="gaussian")
    assert res.columns == ("alpha", "f01", "f12", "f23", "f34")
    assert len(res) == 1
    row = res.rows[0]
    assert row[1] == pytest.approx(diff(0, 3.0, "gaussian"), rel=1e-14)
    assert res.ok


def test_sweep_full_regime_and_errors():
    res = sweep_spectrum([2.0, 4.0], levels=(1, 2, 3), regime="full", varrho=1e3)
    assert res.columns == ("alpha", "f12", "f23")
    assert res.meta["varrho"] == 1e3
    with pytest.raises(DomainError):
        sweep_spectrum([])
    with pytest.raises(DomainError):
        sweep_spectrum([1.0], levels=(0, 2))
