"""First-order gravitational shifts of harmonic-trap levels.

The level shift is ``Delta E_n = -(G hbar m_atom / (4 sigma^3 omega0)) f_n``
with::

    f_n(alpha, varrho) = alpha^2 Int_0^inf w_n(u) i(u / alpha, varrho) du

where ``w_n(u) = sqrt(2/pi) exp(-u^2/2) P_n(u)`` is the density of the
separation of two independent draws from level ``n`` (in units of the
oscillator length).  Because ``w_n`` is normalised, ``i(0)`` contributes
``alpha^2 i(0)`` to every level; that piece is large and n-independent, so
it is kept apart and only ``i - i(0)`` is integrated numerically.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import constants
from .kernels import (
    SQRT_2_OVER_PI,
    _overlap_shift,
    constant_part,
    i_dimensionless,
    i_variable,
    self_shift,
)
from .params import (
    CrystalParams,
    DomainError,
    Family,
    Lattice,
    Material,
    alpha_of,
    get_material,
    mass_for_alpha,
    sn_frequency_squared,
    spectral_prefactor,
)
from .parallel import pmap
from .polynomials import P_MAX, dip_points, pair_density, wide_coefficient
from .quadrature import ConvergenceError, integrate_1d
from .results import SweepResult

REGIMES = ("full", "narrow", "intermediate", "wide")
RETENTIONS = ("complete", "truncated")
DEFAULT_REL_TOL = 1e-10


class RegimeWarning(UserWarning):
    """Parameters look inconsistent with the requested approximation."""


class UnsupportedRegimeError(DomainError):
    pass


@dataclass(frozen=True)
class FnValue:
    """``f_n`` split into the n-independent constant and the numerically integrated rest."""

    constant: float
    variable: float
    error: float

    @property
    def total(self):
        return self.constant + self.variable

    def __float__(self):
        return float(self.total)


def _check_level(n):
    if not (isinstance(n, (int, np.integer)) and 0 <= n <= P_MAX):
        raise DomainError(f"level index must be an integer in [0, {P_MAX}], got {n!r}")


def _cutoff(n):
    # w_n(u) < 1e-30 beyond this separation
    return 2.0 * math.sqrt(2 * n + 1) + 12.0


def spectral_integral(
    n: int,
    alpha: float,
    kernel: Callable[[np.ndarray], np.ndarray],
    lo: float = 0.0,
    hi: Optional[float] = None,
    breakpoints: Sequence[float] = (),
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = 0.0,
):
    """``alpha^2 Int_lo^hi w_n(u) kernel(u/alpha) du`` in separation units ``u``.

    ``lo`` and ``hi`` are separations (``u = alpha zeta``).  ``breakpoints``
    are given in ``zeta`` and mark kinks of ``kernel``.  Returns a
    :class:`QuadResult`-like ``(value, error)`` pair.
    """
    _check_level(n)
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha!r}")
    top = _cutoff(n) if hi is None else min(hi, _cutoff(n))
    if top <= lo:
        return 0.0, 0.0
    pts = {alpha * b for b in breakpoints}
    # split between the oscillations of w_n, plus the tail edge
    pts.update(dip_points(n))
    pts.add(2.0 * math.sqrt(2 * n + 1) + 2.0)
    pts = sorted(p for p in pts if lo < p < top)

    def integrand(u):
        return pair_density(n, u) * kernel(u / alpha)

    res = integrate_1d(integrand, lo, top, rel_tol=rel_tol, abs_tol=abs_tol, breakpoints=pts)
    scale = alpha * alpha
    return scale * res.value, scale * res.error_estimate


def _lattice_for(varrho, N=None, packing=None):
    if N is None:
        if packing is None:
            packing = default_packing()
        N = packing * varrho**3
    return Lattice(N=N, varrho=varrho)


def default_packing():
    """``N sigma^3 / R^3`` for the silicon preset."""
    si = get_material("silicon")
    return 4.0 * math.pi * si.bulk_density * si.sigma**3 / (3.0 * si.m_atom)


def f_n_full(
    n: int,
    alpha: float,
    varrho: float,
    family=Family.SPHERE,
    N: Optional[float] = None,
    packing: Optional[float] = None,
    kernel: Optional[Callable] = None,
    rel_tol: float = DEFAULT_REL_TOL,
) -> FnValue:
    """Full spectral integral ``f_n(alpha, varrho)`` with the complete crystal kernel.

    Parameters
    ----------
    varrho : float
        ``R / sigma``.
    N : float, optional
        Atom count.  Defaults to ``packing * varrho**3`` with the silicon
        packing fraction.
    kernel : callable, optional
        Replace the crystal kernel by ``kernel(zeta)``; the whole integral is
        then reported in ``variable``.
    """
    if kernel is not None:
        val, err = spectral_integral(n, alpha, kernel, rel_tol=rel_tol)
        return FnValue(0.0, val, err)
    lattice = _lattice_for(varrho, N, packing)
    fam = Family.parse(family)
    breaks = [lattice.varrho] + ([1.0] if fam is Family.SPHERE else [])
    const = alpha * alpha * constant_part(lattice, fam)
    val, err = spectral_integral(
        n, alpha, lambda z: i_variable(z, lattice, fam), breakpoints=breaks, rel_tol=rel_tol
    )
    return FnValue(const, val, err)


def f_n_lattice(n, alpha, lattice: Lattice, family=Family.SPHERE, rel_tol=DEFAULT_REL_TOL):
    """``f_n`` for an explicit lattice, integrated without splitting off ``i(0)``.

    Suited to the wide regime, where ``i(0)`` carries no special weight.
    """
    fam = Family.parse(family)
    breaks = [lattice.varrho] + ([1.0] if fam is Family.SPHERE else [])
    val, err = spectral_integral(
        n, alpha, lambda z: i_dimensionless(z, lattice, fam), breakpoints=breaks, rel_tol=rel_tol
    )
    return FnValue(0.0, val, err)


# --- intermediate regime ----------------------------------------------------------

def _sphere_inner(z):
    return z * z * (-2.0 + z * (1.5 - 0.2 * z * z))


def _gauss_shift(z):
    return self_shift(z, Family.GAUSSIAN)


def split_terms(n, alpha, family=Family.SPHERE, rel_tol=DEFAULT_REL_TOL):
    """Individual pieces of the varrho-independent approximation.

    Sphere: ``f1`` (inner self polynomial), ``f4`` (the ``1/(2 zeta)`` tail
    beyond ``zeta = 1``) and ``f_self`` (the ``-6/5`` self constant beyond
    ``zeta = 1``).  Gaussian: ``f1g``.  ``f0 = alpha^2`` always.  Values are
    ``(value, error)`` pairs.
    """
    fam = Family.parse(family)
    out = {"f0": (alpha * alpha, 0.0)}
    if fam is Family.GAUSSIAN:
        out["f1g"] = spectral_integral(n, alpha, _gauss_shift, rel_tol=rel_tol)
        return out
    out["f1"] = spectral_integral(n, alpha, _sphere_inner, hi=alpha, rel_tol=rel_tol)
    out["f4"] = spectral_integral(n, alpha, lambda z: 0.5 / z, lo=alpha, rel_tol=rel_tol)
    out["f_self"] = spectral_integral(
        n, alpha, lambda z: np.full_like(z, -1.2), lo=alpha, rel_tol=rel_tol
    )
    return out


def f_n_intermediate(
    n: int,
    alpha: float,
    family=Family.SPHERE,
    retention: str = "complete",
    rel_tol: float = DEFAULT_REL_TOL,
    packing: float = 0.0,
) -> FnValue:
    """varrho-independent approximation of ``f_n`` without the constant part.

    Parameters
    ----------
    retention : {"complete", "truncated"}
        For the sphere family, ``"truncated"`` keeps only the inner self
        polynomial and the ``1/(2 zeta)`` tail.  ``"complete"`` also keeps
        the self-constant offset beyond ``zeta = 1``, which is n-dependent
        and makes the result agree with the full integral at large
        ``varrho``.  The Gaussian family has a single form.
    packing : float
        ``N sigma^3 / R^3``.  When nonzero, the large-sphere limit
        ``-2 packing (2n + 1)`` of the mutual term is added; by default it
        is dropped as negligible.
    """
    if retention not in RETENTIONS:
        raise ValueError(f"retention must be one of {RETENTIONS}, got {retention!r}")
    if not 0.0 < alpha:
        raise DomainError(f"alpha must be positive, got {alpha!r}")
    if not 0.3 <= alpha <= 100.0:
        warnings.warn(f"alpha = {alpha:g} is outside the intermediate range [0.3, 100]", RegimeWarning)
    fam = Family.parse(family)
    mutual = -2.0 * packing * (2 * n + 1)
    if fam is Family.GAUSSIAN:
        val, err = spectral_integral(n, alpha, _gauss_shift, rel_tol=rel_tol)
    elif retention == "complete":
        val, err = spectral_integral(n, alpha, _overlap_shift, breakpoints=[1.0], rel_tol=rel_tol)
    else:
        terms = split_terms(n, alpha, fam, rel_tol)
        val = terms["f1"][0] + terms["f4"][0]
        err = terms["f1"][1] + terms["f4"][1]
    return FnValue(0.0, val + mutual, err)


# --- narrow and wide limits ---------------------------------------------------------

def f_n_narrow(n, alpha, lattice: Lattice, family=Family.SPHERE) -> FnValue:
    """Quadratic-kernel asymptote of ``f_n`` for ``alpha >> 1``."""
    fam = Family.parse(family)
    level = 2 * n + 1
    if fam is Family.SPHERE:
        const = 1.2 * lattice.gamma(0) * alpha**2
        var = -2.0 * lattice.gamma(2) * level
    else:
        const = (1.2 * lattice.beta(0) + SQRT_2_OVER_PI) * alpha**2
        var = -2.0 * lattice.beta(2) * level - SQRT_2_OVER_PI * 2.0 * level / 3.0
    return FnValue(const, var, 0.0)


def narrow_transition_coefficient(n1, n2, family=Family.SPHERE):
    """Limit of ``f_{n2} - f_{n1}`` for ``alpha -> oo`` (large crystal)."""
    c = 4.0 if Family.parse(family) is Family.SPHERE else 4.0 * SQRT_2_OVER_PI / 3.0
    return c * (n1 - n2)


def wide_coefficients(n):
    """Exact rational ``F_n`` of the wide-wave-function shift."""
    _check_level(n)
    return wide_coefficient(n)


def wide_log_slope(n, alphas, lattice: Lattice, family=Family.SPHERE, rel_tol=1e-11):
    """Least-squares slope of ``f_n / alpha^3`` against ``ln alpha``.

    In the wide limit ``f_n / alpha^3 -> -(N+1) F_n / sqrt(2 pi) * ln alpha + c_n``,
    so the slope isolates the coefficient proportional to ``F_n`` while the
    level-dependent offset ``c_n`` drops out.
    """
    alphas = np.asarray(alphas, dtype=float)
    if alphas.size < 2:
        raise DomainError("need at least two alpha values")
    vals = np.array([f_n_lattice(n, a, lattice, family, rel_tol).total / a**3 for a in alphas])
    slope, _ = np.polyfit(np.log(alphas), vals, 1)
    return float(slope)


def energy_shift_narrow(n, params: CrystalParams, omega0, family=Family.SPHERE, G=constants.G):
    """Narrow-regime level shift in joules."""
    fam = Family.parse(family)
    w2 = sn_frequency_squared(params.material, fam, G)
    if fam is Family.SPHERE:
        gamma0 = params.gamma_k(0)
    else:
        gamma0 = 2.5 + 1.5 * math.sqrt(2.0 * math.pi) * params.beta_k(0)
    return params.m * w2 * (
        -1.2 * gamma0 * params.sigma**2 + (n + 0.5) * constants.HBAR / (params.m * omega0)
    )


def energy_shift(fn_value, material: Material, omega0, G=constants.G):
    """Convert ``f_n`` to a level shift in joules."""
    return -G * constants.HBAR * material.m_atom / (4.0 * material.sigma**3 * omega0) * float(fn_value)


# --- transitions ----------------------------------------------------------------

@dataclass(frozen=True)
class SpectrumQuery:
    params: CrystalParams
    alpha: float
    family: Family = Family.SPHERE
    regime: str = "intermediate"
    G: float = constants.G
    retention: str = "complete"

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if self.regime == "semi-wide":
            raise UnsupportedRegimeError(
                "the semi-wide regime (sigma < width < R) has no implemented approximation"
            )
        if self.regime not in REGIMES:
            raise DomainError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if not self.alpha > 0:
            raise DomainError("alpha must be positive")

    @property
    def omega0(self):
        p = self.params
        return self.alpha**2 * constants.HBAR / (4.0 * p.sigma**2 * p.m)


@dataclass(frozen=True)
class TransitionEnergy:
    """Transition energy in units of ``hbar omega0``."""

    value: float
    gravitational_part: float
    f_tilde: Optional[float] = None
    error: float = 0.0


def ground_state_width(m, omega0):
    """Position spread ``sqrt(hbar / (2 m omega0))`` of the trap ground state."""
    return math.sqrt(constants.HBAR / (2.0 * m * omega0))


def _level_f(n, q: SpectrumQuery):
    if q.regime == "full":
        return f_n_full(n, q.alpha, q.params.varrho, q.family, N=q.params.N)
    if q.regime == "intermediate":
        return f_n_intermediate(n, q.alpha, q.family, q.retention)
    return f_n_narrow(n, q.alpha, q.params.lattice, q.family)


def transition_energy(n1: int, n2: int, query: SpectrumQuery) -> TransitionEnergy:
    """Energy of the ``n1 -> n2`` line in units of ``hbar omega0``."""
    if not n1 < n2:
        raise DomainError("transitions need n1 < n2")
    _check_level(n1)
    _check_level(n2)
    q = query
    p = q.params
    omega0 = q.omega0
    if q.regime == "wide":
        width = ground_state_width(p.m, omega0)
        if width < p.R:
            warnings.warn(
                f"wave-function width {width:.3g} m is below the radius {p.R:.3g} m; "
                "the wide approximation does not apply",
                RegimeWarning,
            )
        pref = q.G * math.sqrt(2.0 * p.m**5 / (math.pi * constants.HBAR**3 * omega0))
        dF = float(wide_coefficients(n2) - wide_coefficients(n1))
        grav = pref * math.log(q.alpha) * dF
        return TransitionEnergy(n2 - n1 + grav, grav)
    if q.regime == "narrow" and q.alpha < 10.0:
        warnings.warn(f"alpha = {q.alpha:g} is small for the narrow approximation", RegimeWarning)
    f1 = _level_f(n1, q)
    f2 = _level_f(n2, q)
    # constants cancel exactly; difference the integrated parts only
    f_tilde = f2.variable - f1.variable + (f2.constant - f1.constant)
    pref = spectral_prefactor(p.material, omega0, q.G)
    grav = -pref * f_tilde
    return TransitionEnergy(n2 - n1 + grav, grav, f_tilde, pref * (f1.error + f2.error))


# --- sweeps -------------------------------------------------------------------------

def transition_column(n):
    return f"f{n}{n + 1}"


def sweep_spectrum(
    alphas,
    levels=(0, 1, 2, 3, 4),
    family=Family.SPHERE,
    regime="intermediate",
    varrho: float = 1e4,
    N: Optional[float] = None,
    retention="complete",
    threads=None,
) -> SweepResult:
    """Tabulate ``f~_{n,n+1}(alpha)`` for consecutive level pairs.

    Columns are ``alpha`` followed by ``f01, f12, ...`` for the consecutive
    pairs in ``levels``.  The ``full`` regime uses the lattice ``(N, varrho)``.
    """
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise DomainError("alpha grid is empty")
    levels = list(levels)
    if len(levels) < 2 or any(b != a + 1 for a, b in zip(levels, levels[1:])):
        raise DomainError("levels must be at least two consecutive integers")
    fam = Family.parse(family)
    if regime not in ("full", "intermediate", "narrow"):
        raise DomainError(f"sweep regime must be full, intermediate or narrow, got {regime!r}")
    lattice = _lattice_for(varrho, N)

    def point(a):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RegimeWarning)
                if regime == "full":
                    fs = [f_n_full(n, a, varrho, fam, N=lattice.N) for n in levels]
                elif regime == "intermediate":
                    fs = [f_n_intermediate(n, a, fam, retention) for n in levels]
                else:
                    fs = [f_n_narrow(n, a, lattice, fam) for n in levels]
        except ConvergenceError as exc:
            return (a,) + (math.nan,) * (len(levels) - 1), str(exc)
        diffs = tuple(
            (fb.variable - fa.variable) + (fb.constant - fa.constant) for fa, fb in zip(fs, fs[1:])
        )
        return (a,) + diffs, ""

    out = SweepResult(("alpha",) + tuple(transition_column(n) for n in levels[:-1]))
    for row, err in pmap(point, alphas, threads):
        out.append(row, err)
    out.meta = {"family": fam.value, "regime": regime, "retention": retention, "rel_tol": DEFAULT_REL_TOL}
    if regime == "full":
        out.meta.update(varrho=varrho, N=lattice.N)
    return out


def mass_frequency_table(omegas, alphas=(1.0, 5.0, 10.0), materials=("silicon", "osmium")) -> SweepResult:
    """Spectral pre-factor and the mass reaching each ``alpha`` per trap frequency."""
    mats = [get_material(m) if isinstance(m, str) else m for m in materials]
    cols = ["omega0"]
    for m in mats:
        cols.append(f"prefactor_{m.name}")
        cols += [f"m_kg_{m.name}_alpha{a:g}" for a in alphas]
    out = SweepResult(tuple(cols))
    for w in omegas:
        row = [float(w)]
        for m in mats:
            row.append(spectral_prefactor(m, w))
            row += [mass_for_alpha(m, a, w) for a in alphas]
        out.append(row)
    return out


def wide_transition_table(masses, omegas=(1.0,), material="silicon", levels=(0, 1, 2, 3), G=constants.G):
    """Wide-regime pre-factor and transition shifts against total mass.

    Rows stop being valid once the ground-state width reaches the sphere
    radius; those rows carry a diagnostic in ``errors``.
    """
    from .params import crystal_params

    mat = get_material(material) if isinstance(material, str) else material
    pairs = list(zip(levels, levels[1:]))
    cols = ["m_kg", "omega0", "prefactor"] + [f"E{a}{b}_grav" for a, b in pairs]
    out = SweepResult(tuple(cols))
    for w in omegas:
        for m in masses:
            params = crystal_params(mat, float(m))
            alpha = alpha_of(mat.sigma, params.m, w)
            pref = G * math.sqrt(2.0 * params.m**5 / (math.pi * constants.HBAR**3 * w)) * math.log(alpha)
            shifts = [pref * float(wide_coefficients(b) - wide_coefficients(a)) for a, b in pairs]
            valid = ground_state_width(params.m, w) > params.R
            out.append([params.m, float(w), pref] + shifts, "" if valid else "width below radius")
    return out
