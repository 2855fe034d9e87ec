"""Second-moment dynamics of a Gaussian wave packet under self-gravity.

For a Gaussian state of position variance ``u1`` the gravitational terms of
the moment equations depend on ``u1`` only, through
``alpha = 2 sigma / sqrt(u1)``::

    g(alpha)  = G m_atom / (sqrt(pi) sigma) * alpha Int_0^inf exp(-alpha^2 zeta^2 / 4) c(zeta) d zeta
    <V_g>/m   = -G m_atom / (sqrt(pi) sigma) * alpha Int_0^inf exp(-alpha^2 zeta^2 / 4) i(zeta) d zeta

with ``c = zeta i' + 2 i``.  Both contain an alpha-independent piece
proportional to ``i(0)``; it cancels in the equations of motion and is
handled analytically.  With ``v = alpha zeta / 2`` every integral carries
the weight ``exp(-v^2)``.

Note that this ``alpha`` is the width parameter of the packet itself; for
the trap ground state it is ``sqrt(2)`` times the spectral ``alpha``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from . import constants
from .kernels import _overlap_combo_shift, _overlap_shift, constant_part, self_combo, self_shift
from .params import CrystalParams, DomainError, Family, Lattice, Material, get_material, sn_frequency_squared
from .parallel import pmap
from .quadrature import ConvergenceError, integrate_1d
from .results import SweepResult

SQRT_PI = math.sqrt(math.pi)
RETENTIONS = ("full", "intermediate", "truncated")
_V_MAX = 9.5  # exp(-v^2) < 1e-39 beyond


class IntegrationError(RuntimeError):
    """ODE integration failed; ``partial`` holds the trajectory computed so far."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


# --- kernel pieces with the zeta = 0 value removed -------------------------------

def _combo_shift(zeta, lattice: Optional[Lattice], family, retention):
    """``c(zeta) - c(0)`` for the chosen retention."""
    fam = Family.parse(family)
    z = np.asarray(zeta, dtype=float)
    if fam is Family.GAUSSIAN:
        c0 = 2.0 * math.sqrt(2.0 / math.pi)
        small = z < 1e-3
        z2 = z * z
        series = math.sqrt(2.0 / math.pi) * z2 * (-8.0 / 3.0 + z2 * (2.4 - z2 * 32.0 / 21.0))
        self_part = np.where(small, series, self_combo(np.where(small, 1.0, z), fam) - c0)
    elif retention == "truncated":
        # inner self polynomial and the bare 1/(2 zeta) tail
        with np.errstate(divide="ignore"):
            self_part = np.where(z <= 1.0, _overlap_combo_shift(z), 0.5 / z)
    else:
        self_part = _overlap_combo_shift(z)
    if retention == "full":
        x = z / lattice.varrho
        self_part = self_part + lattice.N / lattice.varrho * _overlap_combo_shift(x)
    return self_part


def _kernel_shift(zeta, lattice: Optional[Lattice], family, retention):
    """``i(zeta) - i(0)`` for the chosen retention."""
    z = np.asarray(zeta, dtype=float)
    fam = Family.parse(family)
    if fam is Family.SPHERE and retention == "truncated":
        inner = z * z * (-2.0 + z * (1.5 - 0.2 * z * z))
        with np.errstate(divide="ignore"):
            out = np.where(z <= 1.0, inner, 0.5 / z)
    else:
        out = self_shift(z, fam)
    if retention == "full":
        out = out + lattice.N / lattice.varrho * _overlap_shift(z / lattice.varrho)
    return out


def _check_retention(retention, params):
    if retention not in RETENTIONS:
        raise ValueError(f"retention must be one of {RETENTIONS}, got {retention!r}")
    if retention == "full" and params is None:
        raise DomainError("full retention needs crystal parameters")


def _v_breaks(alpha, lattice, family):
    pts = []
    if Family.parse(family) is Family.SPHERE:
        pts.append(alpha / 2.0)
    if lattice is not None:
        pts.append(alpha * lattice.varrho / 2.0)
    return [p for p in pts if 0 < p < _V_MAX]


def _v_integral(fn, alpha, lattice, family, rel_tol):
    res = integrate_1d(fn, 0.0, _V_MAX, rel_tol=rel_tol, abs_tol=1e-300,
                       breakpoints=_v_breaks(alpha, lattice, family))
    return res.value, res.error_estimate


# --- g, g', <V_g> ----------------------------------------------------------------------

def _as_alpha(alpha=None, u1=None, sigma=None):
    if (alpha is None) == (u1 is None):
        raise ValueError("give exactly one of alpha or u1")
    if u1 is not None:
        if not u1 > 0:
            raise DomainError("u1 must be positive")
        return 2.0 * sigma / math.sqrt(u1)
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    return float(alpha)


def k_sum(alpha, params: Optional[CrystalParams] = None, family=Family.SPHERE,
          retention="full", rel_tol=1e-11, packing=0.0):
    """``K(alpha) = alpha^3 Int exp(-alpha^2 zeta^2/4) (2 - alpha^2 zeta^2) (c - c(0)) d zeta``.

    ``g' = -G m_atom K / (16 sqrt(pi) sigma^3)``; the narrow limit is
    ``K -> 64 sqrt(pi)`` (sphere) and ``64 sqrt(pi) sqrt(2/pi) / 3`` (Gaussian).
    For the reduced retentions a nonzero ``packing`` (``N sigma^3 / R^3``)
    adds the large-sphere limit ``64 sqrt(pi) packing`` of the mutual term.
    """
    _check_retention(retention, params)
    lattice = params.lattice if retention == "full" else None
    # c(0) integrates to zero against this weight; keep it in for wide packets,
    # where it would otherwise dwarf the kernel tail
    c0 = 0.0
    if alpha * (lattice.varrho if lattice is not None else 1.0) < 2.0:
        c0 = 2.4 if Family.parse(family) is Family.SPHERE else 2.0 * math.sqrt(2.0 / math.pi)
        if lattice is not None:
            c0 += 2.4 * lattice.N / lattice.varrho

    def fn(v):
        c = _combo_shift(2.0 * v / alpha, lattice, family, retention) + c0
        return np.exp(-v * v) * (2.0 - 4.0 * v * v) * c

    val, err = _v_integral(fn, alpha, lattice, family, rel_tol)
    mutual = 64.0 * SQRT_PI * packing if retention != "full" else 0.0
    return 2.0 * alpha * alpha * val + mutual, 2.0 * alpha * alpha * err


def g_prime(alpha=None, params: Optional[CrystalParams] = None, family=Family.SPHERE,
            retention="full", u1=None, material: Optional[Material] = None, G=constants.G,
            packing=0.0):
    """``d g / d u1`` in s^-2 for a Gaussian packet.

    Parameters
    ----------
    alpha, u1 : float
        Packet width, either as ``alpha = 2 sigma / sqrt(u1)`` or ``u1`` (m^2).
    retention : {"full", "intermediate", "truncated"}
        ``"full"`` uses the complete crystal kernel of ``params``.
        ``"intermediate"`` keeps only the atomic self term, which is the
        large-sphere limit.  ``"truncated"`` (sphere family) additionally drops
        the ``-12/5`` self constant beyond ``zeta = 1``.
    packing : float
        See :func:`k_sum`.
    """
    mat = material if material is not None else params.material
    a = _as_alpha(alpha, u1, mat.sigma)
    K, _ = k_sum(a, params, family, retention, packing=packing)
    return -G * mat.m_atom * K / (16.0 * SQRT_PI * mat.sigma**3)


def g_variable(alpha, params=None, family=Family.SPHERE, retention="full",
               material: Optional[Material] = None, G=constants.G, rel_tol=1e-12):
    """``g(alpha) - g(oo)``: the width-dependent part of ``g`` (m^2 / s^2)."""
    _check_retention(retention, params)
    mat = material if material is not None else params.material
    lattice = params.lattice if retention == "full" else None

    def fn(v):
        return np.exp(-v * v) * _combo_shift(2.0 * v / alpha, lattice, family, retention)

    val, _ = _v_integral(fn, alpha, lattice, family, rel_tol)
    return G * mat.m_atom / (SQRT_PI * mat.sigma) * 2.0 * val


def potential_constant(params=None, family=Family.SPHERE, retention="full",
                       material: Optional[Material] = None, G=constants.G):
    """Width-independent part of ``<V_g>/m`` (m^2 / s^2)."""
    mat = material if material is not None else params.material
    if retention == "full":
        i0 = constant_part(params.lattice, family)
    elif Family.parse(family) is Family.GAUSSIAN:
        i0 = math.sqrt(2.0 / math.pi)
    else:
        i0 = 1.2
    return -G * mat.m_atom * i0 / mat.sigma


def potential_variable(alpha, params=None, family=Family.SPHERE, retention="full",
                       material: Optional[Material] = None, G=constants.G, rel_tol=1e-12):
    """Width-dependent part of ``<V_g>/m`` for a Gaussian packet (m^2 / s^2)."""
    _check_retention(retention, params)
    mat = material if material is not None else params.material
    lattice = params.lattice if retention == "full" else None

    def fn(v):
        return np.exp(-v * v) * _kernel_shift(2.0 * v / alpha, lattice, family, retention)

    val, _ = _v_integral(fn, alpha, lattice, family, rel_tol)
    return -G * mat.m_atom / (SQRT_PI * mat.sigma) * 2.0 * val


def mean_potential(alpha, params=None, family=Family.SPHERE, retention="full", G=constants.G):
    """``<V_g>/m`` for a Gaussian packet (m^2 / s^2)."""
    return potential_constant(params, family, retention, G=G) + potential_variable(
        alpha, params, family, retention, G=G
    )


# --- k-integrals --------------------------------------------------------------------

def k_integrals(alpha, varrho, rel_tol=1e-11):
    """The k-integrals of the intermediate-width decomposition.

    Returns a dict with ``k0`` (closed form), ``k1``, ``k1g``, ``k2``, ``k3``
    and ``k4``.  ``k2`` is the coefficient of ``N sigma^3 / R^3`` in the
    mutual term, whose integrand is
    ``-8 zeta^2 + 15 zeta^3 / (2 varrho) - 7 zeta^5 / (5 varrho^3)``; it tends
    to ``64 sqrt(pi)`` for large ``varrho``.
    """
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    if not varrho >= 1:
        raise DomainError("varrho must be >= 1")
    a = float(alpha)
    a2 = a * a

    def weight(z):
        return np.exp(-a2 * z * z / 4.0) * (2.0 - a2 * z * z)

    def quad(fn, lo, hi, bps=()):
        # restrict the infinite tail to where the Gaussian weight matters
        top = min(hi, 2.0 * _V_MAX / a)
        if top <= lo:
            return 0.0
        return a**3 * integrate_1d(fn, lo, top, rel_tol=rel_tol, abs_tol=1e-300,
                                   breakpoints=[b for b in bps if lo < b < top]).value

    r = float(varrho)
    out = {"k0": 2.0 * a**3 * r * math.exp(-a2 * r * r / 4.0)}
    out["k1"] = quad(lambda z: weight(z) * z * z * (-8.0 + z * (7.5 - 1.4 * z * z)), 0.0, 1.0)
    out["k1g"] = quad(
        lambda z: weight(z) * self_combo(z, Family.GAUSSIAN), 0.0, np.inf, [1.0, 2.0]
    )
    out["k2"] = quad(
        lambda z: weight(z) * z * z * (-8.0 + 7.5 * z / r - 1.4 * z**3 / r**3), 0.0, r
    )
    out["k3"] = quad(lambda z: weight(z) * 0.5 / z, r, np.inf)
    out["k4"] = quad(lambda z: weight(z) * 0.5 / z, 1.0, np.inf)
    return out


def g_prime_wide(u1, params: CrystalParams, coefficient="atoms", G=constants.G):
    """Wide-packet asymptote of ``g'(u1)`` (s^-2).

    ``coefficient="atoms"`` weights the far-field kernel by the atom count
    ``N``, giving ``-(G m / (4 sqrt(pi))) u1^(-3/2) ln(u1 / sigma^2)``.
    ``coefficient="volume"`` uses ``varrho^3`` in place of ``N``, the form
    ``-(3 G m_atom m / (16 pi^(3/2) rho sigma^3)) u1^(-3/2) ln(u1 / sigma^2)``,
    which is larger by the inverse packing fraction.
    """
    if not u1 > 0:
        raise DomainError("u1 must be positive")
    if math.sqrt(u1) < params.R:
        warnings.warn("packet width is below the sphere radius; wide asymptote not valid",
                      RuntimeWarning)
    sigma = params.sigma
    log = math.log(u1 / sigma**2)
    if coefficient == "atoms":
        return -G * params.m / (4.0 * SQRT_PI) * u1**-1.5 * log
    if coefficient == "volume":
        rho = params.material.bulk_density
        return -3.0 * G * params.m_atom * params.m / (16.0 * math.pi**1.5 * rho * sigma**3) * u1**-1.5 * log
    raise ValueError("coefficient must be 'atoms' or 'volume'")


# --- trajectories ---------------------------------------------------------------------

@dataclass(frozen=True)
class MomentState:
    t: float  # s
    x_mean: float  # m
    p_mean: float  # kg m / s
    u1: float  # m^2
    u2: float  # m^2 / s^2, includes <V_g>/m
    u3: float  # m^2 / s


@dataclass(frozen=True)
class GaussianTrapRun:
    params: CrystalParams
    omega0: float
    family: Family = Family.SPHERE
    kappa: float = 1.0
    x0: float = 0.0
    p0: float = 0.0
    t_end: float = 1.0
    samples: int = 1001
    tolerance: float = 1e-10
    gravity_scale: float = 1.0
    retention: str = "full"
    G: float = constants.G

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if not self.kappa > 0:
            raise DomainError("kappa must be positive")
        if not (self.omega0 > 0 and self.t_end > 0):
            raise DomainError("omega0 and t_end must be positive")
        if self.samples < 2:
            raise DomainError("need at least two samples")
        if self.gravity_scale < 0:
            raise DomainError("gravity_scale must be non-negative")
        _check_retention(self.retention, self.params)

    @property
    def ground_variance(self):
        return constants.HBAR / (2.0 * self.params.m * self.omega0)


@dataclass
class MomentTrajectory:
    t: np.ndarray
    x_mean: np.ndarray
    p_mean: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray
    run: Optional[GaussianTrapRun] = None
    dense: Optional[object] = field(default=None, repr=False)  # u1(t) callable

    def __len__(self):
        return self.t.size

    def __getitem__(self, i):
        return MomentState(float(self.t[i]), float(self.x_mean[i]), float(self.p_mean[i]),
                           float(self.u1[i]), float(self.u2[i]), float(self.u3[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))


class _GTable:
    """Cubic spline of ``g(alpha) - g(oo)`` against ``ln alpha``."""

    def __init__(self, run: GaussianTrapRun, u1_lo, u1_hi, points=96):
        sigma = run.params.sigma
        a_hi = 2.0 * sigma / math.sqrt(u1_lo)
        a_lo = 2.0 * sigma / math.sqrt(u1_hi)
        pad = 0.05
        self.log_a = np.linspace(math.log(a_lo) - pad, math.log(a_hi) + pad, points)
        alphas = np.exp(self.log_a)
        scale = run.gravity_scale * run.G
        vals = np.array([g_variable(a, run.params, run.family, run.retention, G=scale) for a in alphas])
        self.spline = CubicSpline(self.log_a, vals)
        self.sigma = sigma

    def __call__(self, u1):
        return float(self.spline(math.log(2.0 * self.sigma / math.sqrt(u1))))

    def derivative(self, u1):
        """``d g / d u1`` from the spline."""
        log_a = math.log(2.0 * self.sigma / math.sqrt(u1))
        return float(self.spline(log_a, 1)) * (-0.5 / u1)


def gravity_table(run: GaussianTrapRun, u1_lo, u1_hi, points=96):
    return _GTable(run, u1_lo, u1_hi, points)


def evolve_moments(run: GaussianTrapRun, t_eval=None) -> MomentTrajectory:
    """Integrate the first moments and the Gaussian-closed second-moment system.

    State is advanced in units ``s0 = hbar / (2 m omega0)`` and
    ``tau = omega0 t`` with an eighth-order Runge-Kutta method.  The
    gravitational drive uses a spline of ``g(u1)`` tabulated once per run
    over the width range of the gravity-free orbit (with margin).

    Raises
    ------
    IntegrationError
        Step-size collapse or a width leaving the tabulated range.
    """
    w0 = run.omega0
    s0 = run.ground_variance
    m = run.params.m
    k2 = run.kappa**2
    u_lo, u_hi = s0 * min(k2, 1.0 / k2), s0 * max(k2, 1.0 / k2)
    gravity = run.gravity_scale > 0 and run.G != 0
    table = _GTable(run, u_lo / 1.5, u_hi * 1.5) if gravity else None
    scale = run.gravity_scale * run.G

    if gravity:
        a0 = 2.0 * run.params.sigma / math.sqrt(k2 * s0)
        v_var0 = potential_variable(a0, run.params, run.family, run.retention, G=scale)
        v_const = potential_constant(run.params, run.family, run.retention, G=scale)
    else:
        v_var0 = v_const = 0.0
    ell = math.sqrt(2.0 * s0)
    p_unit = m * w0 * ell
    y0 = np.array([
        run.x0 / ell,
        run.p0 / p_unit,
        k2,
        (s0 * w0 * w0 / k2 + v_var0) / (s0 * w0 * w0),
        0.0,
    ])
    gnorm = 1.0 / (s0 * w0 * w0)

    def rhs(tau, y):
        x, p, U1, U2, U3 = y
        drive = table(U1 * s0) * gnorm if gravity else 0.0
        return [p, -x, U3, -U3, -2.0 * U1 + 2.0 * U2 + drive]

    def leave(tau, y):
        # stay inside the spline range
        return min(y[2] - u_lo / (1.45 * s0), u_hi * 1.45 / s0 - y[2])

    leave.terminal = True
    tau_end = w0 * run.t_end
    if t_eval is None:
        t_eval = np.linspace(0.0, run.t_end, run.samples)
    t_eval = np.asarray(t_eval, dtype=float)
    sol = solve_ivp(rhs, (0.0, tau_end), y0, method="DOP853", t_eval=w0 * t_eval,
                    rtol=run.tolerance, atol=run.tolerance * 1e-3, dense_output=True,
                    events=leave if gravity else None)
    traj = _to_trajectory(sol, run, ell, p_unit, s0, v_const)
    if sol.status != 0:
        raise IntegrationError(f"moment integration stopped: {sol.message}", traj)
    return traj


def _to_trajectory(sol, run, ell, p_unit, s0, v_const):
    w0 = run.omega0
    Y = sol.y
    dense = sol.sol

    def u1_of_t(t):
        return dense(np.asarray(t) * w0)[2] * s0

    return MomentTrajectory(
        t=sol.t / w0,
        x_mean=Y[0] * ell,
        p_mean=Y[1] * p_unit,
        u1=Y[2] * s0,
        u2=Y[3] * s0 * w0 * w0 + v_const,
        u3=Y[4] * s0 * w0,
        run=run,
        dense=u1_of_t if dense is not None else None,
    )


def free_width(t, run: GaussianTrapRun):
    """Gravity-free ``u1(t)`` of a packet squeezed by ``kappa``."""
    s0 = run.ground_variance
    wt = run.omega0 * np.asarray(t, dtype=float)
    return s0 * (run.kappa**2 * np.cos(wt) ** 2 + np.sin(wt) ** 2 / run.kappa**2)


# --- de-phasing -------------------------------------------------------------------

@dataclass(frozen=True)
class Dephasing:
    phase_lag: float  # rad at the last sample
    frequency: float  # internal angular frequency, rad/s
    crossings: int


def _upward_crossings(t, y, dense=None, offset=0.0):
    out = []
    for i in range(len(t) - 1):
        if y[i] < 0.0 <= y[i + 1]:
            if dense is not None:
                out.append(brentq(lambda s: dense(s) - offset, t[i], t[i + 1], xtol=1e-15 * max(1.0, t[i + 1])))
                continue
            # quadratic through three neighbouring samples
            j = min(max(i - 1, 0), len(t) - 3)
            c = np.polyfit(t[j:j + 3] - t[i], y[j:j + 3], 2)
            roots = np.roots(c)
            roots = [r.real + t[i] for r in roots if abs(r.imag) < 1e-12 and 0 <= r.real <= t[i + 1] - t[i]]
            if roots:
                out.append(min(roots))
            else:
                out.append(t[i] - y[i] * (t[i + 1] - t[i]) / (y[i + 1] - y[i]))
    return np.array(out)


def extract_dephasing(traj: MomentTrajectory, omega0, use_dense=True) -> Dephasing:
    """Internal frequency of the width oscillation and its phase lag behind ``omega0``.

    ``u1`` oscillates at twice the internal frequency.  Upward zero
    crossings of ``u1 - mean`` are located (refined on the dense ODE output
    when available, else by quadratic interpolation of the samples) and a
    straight line through their times gives the period ``pi / omega``.
    The phase lag is ``(omega - omega0) * t_end``.
    """
    t = np.asarray(traj.t)
    u = np.asarray(traj.u1)
    mid = 0.5 * (u.max() + u.min())
    amp = 0.5 * (u.max() - u.min())
    if amp <= 1e-12 * abs(mid):
        raise DomainError("u1 does not oscillate; use a squeezed initial state")
    dense = traj.dense if use_dense else None
    cross = _upward_crossings(t, u - mid, dense, mid)
    if cross.size < 4:
        raise DomainError("trajectory too short: need at least three internal oscillation periods")
    idx = np.arange(cross.size)
    period, _ = np.polyfit(idx, cross, 1)
    omega = math.pi / period
    return Dephasing((omega - omega0) * float(t[-1]), omega, int(cross.size))


# --- sweeps ---------------------------------------------------------------------------

def sweep_omega_sn(alphas, family=Family.SPHERE, material="silicon", retention="intermediate",
                   params: Optional[CrystalParams] = None, threads=None) -> SweepResult:
    """Effective ``omega_SN^2 = -g'/4`` against the packet width parameter."""
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise DomainError("alpha grid is empty")
    mat = get_material(material) if isinstance(material, str) else material
    fam = Family.parse(family)

    def point(a):
        try:
            return (a, -0.25 * g_prime(a, params, fam, retention, material=mat)), ""
        except ConvergenceError as exc:
            return (a, math.nan), str(exc)

    out = SweepResult(("alpha", "omega_sn_sq"))
    for row, err in pmap(point, alphas, threads):
        out.append(row, err)
    out.meta = {"family": fam.value, "material": mat.name, "retention": retention,
                "plateau": sn_frequency_squared(mat, fam)}
    return out
