"""Grid solver for the one-dimensional Schroedinger-Newton equation in a harmonic trap.

Everything is advanced in oscillator units: lengths in
``ell = sqrt(hbar / (m omega0))``, energies in ``hbar omega0`` and time in
``1 / omega0``.  The self-gravitational potential of a density ``rho(xi)``
(normalised in ``xi``) is then::

    V(xi) = -lambda_G c Int rho(xi') i(|xi - xi'| / alpha) d xi',   c = G m m_atom / (sigma hbar omega0)

with the dimensionless crystal kernel ``i``.  The constant ``i(0)`` is
split off and applied through the norm, so only the slowly varying
remainder is correlated on the grid.
"""

from __future__ import annotations

import math
import os
import struct
import tempfile
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import constants
from .dynamics import MomentTrajectory
from .kernels import KernelModel, constant_part, i_prime, i_variable
from .params import CrystalParams, DomainError, Family, alpha_of

SNAPSHOT_MAGIC = b"SNTRAPWF"
_HEADER = struct.Struct("<8sqddq")
HEADER_SIZE = 64
DEFAULT_POINTS = 2**12
DEFAULT_BOX_WIDTHS = 12.0
MODES = ("imaginary-time", "real-time")


class OracleError(RuntimeError):
    """Non-convergence or a violated conservation law."""


@dataclass
class GridWavefunction:
    """Samples of ``psi`` at cell centres of ``[-L, L]`` (oscillator units)."""

    psi: np.ndarray
    half_width: float
    ell: float = 1.0  # metres per unit

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=complex)
        n = self.psi.size
        if n < 4 or n & (n - 1):
            raise DomainError("grid size must be a power of two")
        if not self.half_width > 0:
            raise DomainError("half width must be positive")

    @property
    def points(self):
        return self.psi.size

    @property
    def dx(self):
        return 2.0 * self.half_width / self.points

    @property
    def x(self):
        return grid_points(self.points, self.half_width)

    @property
    def density(self):
        return np.abs(self.psi) ** 2

    @property
    def norm(self):
        return float(self.density.sum() * self.dx)

    def normalized(self):
        return GridWavefunction(self.psi / math.sqrt(self.norm), self.half_width, self.ell)


def grid_points(n, half_width):
    dx = 2.0 * half_width / n
    return -half_width + (np.arange(n) + 0.5) * dx


@dataclass(frozen=True)
class OracleConfig:
    params: CrystalParams
    omega0: float
    family: Family = Family.GAUSSIAN
    lambda_G: float = 1.0
    dt: Optional[float] = None  # s; default 0.01 / omega0
    steps: int = 1000
    mode: str = "real-time"
    grid_points: int = DEFAULT_POINTS
    box_widths: float = DEFAULT_BOX_WIDTHS  # half box in ground-state widths
    record_every: int = 1
    method: str = "fft"  # or "direct"
    G: float = constants.G

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if self.dt is None:
            object.__setattr__(self, "dt", 0.01 / self.omega0)
        if not self.omega0 > 0:
            raise DomainError("omega0 must be positive")
        if not self.lambda_G >= 0:
            raise DomainError("lambda_G must be non-negative")
        if not 0 < self.dt * self.omega0 < 0.05:
            raise DomainError(f"dt * omega0 must lie in (0, 0.05), got {self.dt * self.omega0:g}")
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}")
        if self.steps < 1 or self.record_every < 1:
            raise DomainError("steps and record_every must be positive")
        if self.method not in ("fft", "direct"):
            raise DomainError("method must be 'fft' or 'direct'")
        n = self.grid_points
        if n < 16 or n & (n - 1):
            raise DomainError("grid_points must be a power of two >= 16")
        if not self.box_widths > 0:
            raise DomainError("box_widths must be positive")

    @property
    def ell(self):
        return math.sqrt(constants.HBAR / (self.params.m * self.omega0))

    @property
    def alpha(self):
        return alpha_of(self.params.sigma, self.params.m, self.omega0)

    @property
    def half_width(self):
        # ground-state width is 1/sqrt(2) in oscillator units
        return self.box_widths / math.sqrt(2.0)

    @property
    def coupling(self):
        """``lambda_G G m m_atom / (sigma hbar omega0)``."""
        p = self.params
        return self.lambda_G * self.G * p.m * p.m_atom / (p.sigma * constants.HBAR * self.omega0)

    @property
    def tau(self):
        return self.dt * self.omega0

    @property
    def model(self):
        return KernelModel(self.family, self.params)


class GravityOperator:
    """Self-gravitational potential and its gradient on a fixed grid."""

    def __init__(self, cfg: OracleConfig):
        self.cfg = cfg
        n = cfg.grid_points
        self.n = n
        self.dx = 2.0 * cfg.half_width / n
        lat, fam, a = cfg.params.lattice, cfg.family, cfg.alpha
        d = np.arange(n) * self.dx
        self.kern = np.asarray(i_variable(d / a, lat, fam))
        self.kern_prime = np.asarray(i_prime(d / a, lat, fam)) / a
        self.const = constant_part(lat, fam)
        self.coupling = cfg.coupling
        self._hat = self._spectrum(self.kern, even=True)
        self._hat_prime = self._spectrum(self.kern_prime, even=False)

    def _spectrum(self, k, even):
        n = self.n
        wrap = np.zeros(2 * n)
        wrap[:n] = k
        wrap[n + 1:] = (k[1:] if even else -k[1:])[::-1]
        return np.fft.rfft(wrap)

    def _correlate(self, rho, which):
        if self.cfg.method == "direct":
            idx = np.subtract.outer(np.arange(self.n), np.arange(self.n))
            k = self.kern if which == 0 else self.kern_prime
            mat = k[np.abs(idx)] * (1.0 if which == 0 else np.sign(idx))
            return mat @ rho * self.dx
        hat = self._hat if which == 0 else self._hat_prime
        return np.fft.irfft(np.fft.rfft(rho, 2 * self.n) * hat, 2 * self.n)[: self.n] * self.dx

    def variable(self, rho):
        """Potential without the constant ``-c i(0) norm`` (units of hbar omega0)."""
        if self.coupling == 0:
            return np.zeros(self.n)
        return -self.coupling * self._correlate(rho, 0)

    def constant(self, rho):
        return -self.coupling * self.const * float(rho.sum() * self.dx)

    def potential(self, rho):
        return self.variable(rho) + self.constant(rho)

    def gradient(self, rho):
        if self.coupling == 0:
            return np.zeros(self.n)
        return -self.coupling * self._correlate(rho, 1)


def gravitational_potential(psi: GridWavefunction, model: KernelModel, lambda_G, omega0,
                            G=constants.G, method="fft"):
    """``V_g`` in joules sampled at the grid of ``psi``.

    ``psi`` is in oscillator units of a trap with frequency ``omega0``.
    """
    cfg = OracleConfig(model.params, omega0, model.family, lambda_G, grid_points=psi.points,
                       box_widths=psi.half_width * math.sqrt(2.0), method=method, G=G)
    op = GravityOperator(cfg)
    return op.potential(psi.density) * constants.HBAR * omega0


# --- grid helpers -----------------------------------------------------------------

def _wavenumbers(n, dx):
    return 2.0 * np.pi * np.fft.fftfreq(n, dx)


def hermite_state(n_level, points, half_width, kappa=1.0, ell=1.0):
    """Oscillator eigenfunction ``n_level`` (``kappa`` scales its width)."""
    from .polynomials import hermite_functions

    x = grid_points(points, half_width)
    psi = hermite_functions(n_level, x / kappa)[n_level] / math.sqrt(kappa)
    return GridWavefunction(psi.astype(complex), half_width, ell).normalized()


@dataclass(frozen=True)
class GridMoments:
    x: float
    p: float
    x2: float
    p2: float
    xp: float  # <xp + px>
    v_mean: float  # <V_g> total
    v_var_mean: float  # <V_g> without the constant
    h: float  # -<p V' + V' p>


def grid_moments(psi, k, gravity: GravityOperator):
    dx = 2.0 * gravity.cfg.half_width / psi.size
    x = grid_points(psi.size, gravity.cfg.half_width)
    rho = np.abs(psi) ** 2
    dpsi = np.fft.ifft(1j * k * np.fft.fft(psi))
    ppsi = -1j * dpsi
    xm = float(np.sum(x * rho) * dx)
    pm = float(np.real(np.vdot(psi, ppsi)) * dx)
    x2 = float(np.sum(x * x * rho) * dx)
    p2 = float(np.sum(np.abs(dpsi) ** 2) * dx)
    xp = float(2.0 * np.real(np.vdot(psi, x * ppsi)) * dx)
    vv = gravity.variable(rho)
    vm_var = float(np.sum(vv * rho) * dx)
    vm = vm_var + gravity.constant(rho) * float(rho.sum() * dx)
    grad = gravity.gradient(rho)
    h = -float(2.0 * np.real(np.vdot(psi, grad * ppsi)) * dx)
    return GridMoments(xm, pm, x2, p2, xp, vm, vm_var, h)


# --- imaginary time ---------------------------------------------------------------

@dataclass(frozen=True)
class GroundState:
    psi: GridWavefunction
    energy: float  # eigenvalue <H0> + <V_g>, units of hbar omega0
    functional: float  # <H0> + <V_g>/2
    gravitational: float  # <V_g>
    gravitational_variable: float  # <V_g> minus the constant part
    iterations: int
    omega0: float = 1.0

    @property
    def energy_joules(self):
        return self.energy * constants.HBAR * self.omega0


def ground_state(cfg: OracleConfig, level=0, tol=1e-13, max_steps=200_000, initial=None) -> GroundState:
    """Lowest state of the given parity by split-operator imaginary-time propagation.

    ``level`` 0 gives the even ground state and 1 the lowest odd state; the
    parity is imposed after every step.  The potential is refreshed at
    each half step from the current density; its constant part only
    rescales the state and is added back in the reported energies.

    Raises
    ------
    OracleError
        The energy did not settle to ``tol`` within ``max_steps``.
    """
    if cfg.mode != "imaginary-time":
        raise DomainError("ground_state needs an imaginary-time configuration")
    if level not in (0, 1):
        raise DomainError("level must be 0 or 1")
    n, L = cfg.grid_points, cfg.half_width
    gravity = GravityOperator(cfg)
    x = grid_points(n, L)
    dx = 2.0 * L / n
    k = _wavenumbers(n, dx)
    tau = cfg.tau
    trap = 0.5 * x * x
    kin = np.exp(-0.5 * k * k * tau)
    sign = 1.0 if level == 0 else -1.0
    psi = (initial.psi if initial is not None else hermite_state(level, n, L).psi).copy()

    def energy(psi):
        rho = np.abs(psi) ** 2
        t = 0.5 * float(np.sum(np.abs(np.fft.ifft(1j * k * np.fft.fft(psi))) ** 2) * dx)
        v0 = float(np.sum(trap * rho) * dx)
        vv = float(np.sum(gravity.variable(rho) * rho) * dx)
        vc = gravity.constant(rho) * float(rho.sum() * dx)
        return t + v0, vv, vc

    last = None
    check = max(1, int(round(1.0 / tau)))
    for step in range(1, max_steps + 1):
        rho = np.abs(psi) ** 2
        psi = psi * np.exp(-0.5 * tau * (trap + gravity.variable(rho)))
        psi = np.fft.ifft(kin * np.fft.fft(psi))
        rho = np.abs(psi) ** 2
        psi = psi * np.exp(-0.5 * tau * (trap + gravity.variable(rho)))
        psi = 0.5 * (psi + sign * psi[::-1])
        nrm = float(np.sum(np.abs(psi) ** 2) * dx)
        if not (math.isfinite(nrm) and nrm > 0):
            raise OracleError(f"imaginary-time iteration broke down at step {step}")
        psi /= math.sqrt(nrm)
        if step % check == 0:
            h0, vv, vc = energy(psi)
            e = h0 + vv + vc
            if last is not None and abs(e - last) <= tol * max(1.0, abs(e)):
                wf = GridWavefunction(psi, L, cfg.ell)
                return GroundState(wf, e, h0 + 0.5 * (vv + vc), vv + vc, vv, step, cfg.omega0)
            last = e
    raise OracleError(f"imaginary-time iteration did not converge in {max_steps} steps")


def bracket_shift(cfg: OracleConfig, level=0, points=None):
    """``<psi_n|V_g[psi_n]|psi_n>`` on the unperturbed oscillator state.

    Returns ``(total, variable)`` in units of ``hbar omega0``.
    """
    n = points or cfg.grid_points
    if points:
        cfg = replace(cfg, grid_points=points)
    gravity = GravityOperator(cfg)
    wf = hermite_state(level, n, cfg.half_width)
    rho = wf.density
    vv = float(np.sum(gravity.variable(rho) * rho) * wf.dx)
    vc = gravity.constant(rho) * wf.norm
    return vv + vc, vv


# --- real time --------------------------------------------------------------------

@dataclass
class PdeTrajectory:
    """Recorded moments of a real-time run plus per-step diagnostics."""

    moments: MomentTrajectory
    step_time: np.ndarray  # s, every step
    v_var_mean: np.ndarray  # <V_g> without constant, hbar omega0
    h: np.ndarray  # -<p V' + V' p>, oscillator units
    norm_drift: float
    omega0: float
    snapshots: list = field(default_factory=list)  # (step, GridWavefunction)


def propagate(cfg: OracleConfig, initial: GridWavefunction, snapshot_every=0,
              norm_tol=1e-6) -> PdeTrajectory:
    """Second-order split-operator propagation with a self-consistent potential.

    Potential half steps use the density at the start and at the end of the
    kinetic step; the kinetic step is exact in Fourier space.  The constant
    part of the potential is a global phase and is left out of the stepping.
    Moments are
    recorded every ``cfg.record_every`` steps in SI units with ``u2``
    including ``<V_g>/m``.

    Raises
    ------
    OracleError
        Norm drift above ``norm_tol`` per trap period.
    """
    if cfg.mode != "real-time":
        raise DomainError("propagate needs a real-time configuration")
    if initial.points != cfg.grid_points:
        raise DomainError("initial state does not match the grid size")
    if abs(initial.norm - 1.0) > 1e-8:
        raise DomainError("initial state must be normalised")
    n, L = cfg.grid_points, cfg.half_width
    if abs(initial.half_width - L) > 1e-12 * L:
        raise DomainError("initial state does not match the box")
    gravity = GravityOperator(cfg)
    x = grid_points(n, L)
    dx = 2.0 * L / n
    k = _wavenumbers(n, dx)
    tau = cfg.tau
    trap = 0.5 * x * x
    kin = np.exp(-0.5j * k * k * tau)
    psi = initial.psi.copy()

    rec_t, rec = [], []
    v_series = np.empty(cfg.steps + 1)
    h_series = np.empty(cfg.steps + 1)
    snaps = []

    def record(step, psi):
        gm = grid_moments(psi, k, gravity)
        v_series[step] = gm.v_var_mean
        h_series[step] = gm.h
        if step % cfg.record_every == 0:
            rec_t.append(step * tau)
            rec.append(gm)
        if snapshot_every and step % snapshot_every == 0:
            snaps.append((step, GridWavefunction(psi.copy(), L, cfg.ell)))

    record(0, psi)
    per_period = 2.0 * math.pi / tau
    worst = 0.0
    for step in range(1, cfg.steps + 1):
        psi = psi * np.exp(-0.5j * tau * (trap + gravity.variable(np.abs(psi) ** 2)))
        psi = np.fft.ifft(kin * np.fft.fft(psi))
        psi = psi * np.exp(-0.5j * tau * (trap + gravity.variable(np.abs(psi) ** 2)))
        record(step, psi)
        drift = abs(float(np.sum(np.abs(psi) ** 2) * dx) - 1.0)
        worst = max(worst, drift)
        if drift > norm_tol * max(1.0, step / per_period):
            raise OracleError(f"norm drift {drift:.3g} after {step} steps")

    ell = cfg.ell
    m = cfg.params.m
    w0 = cfg.omega0
    hbar = constants.HBAR
    t = np.array(rec_t) / w0
    xm = np.array([g.x for g in rec])
    pm = np.array([g.p for g in rec])
    u1 = np.array([g.x2 - g.x * g.x for g in rec]) * ell**2
    u2 = (np.array([g.p2 - g.p * g.p for g in rec]) * (hbar / (m * ell)) ** 2
          + np.array([g.v_mean for g in rec]) * hbar * w0 / m)
    u3 = np.array([g.xp - 2.0 * g.x * g.p for g in rec]) * hbar / m
    traj = MomentTrajectory(t, xm * ell, pm * hbar / ell, u1, u2, u3)
    return PdeTrajectory(traj, np.arange(cfg.steps + 1) * cfg.dt, v_series, h_series, worst, w0, snaps)


def verify_h_identity(traj: PdeTrajectory) -> float:
    """Largest mismatch between ``h`` and ``-d<V_g>/dt`` over a run.

    Both sides are in oscillator units; the derivative is a central
    difference of the per-step ``<V_g>``.  The residual is normalised by
    ``max |<V_g>|`` of the varying part (so it is meaningful for stationary
    states too) and is zero when gravity is off.
    """
    v = traj.v_var_mean
    if v.size < 3:
        raise DomainError("need at least three steps")
    tau = (traj.step_time[1] - traj.step_time[0]) * traj.omega0
    rhs = -(v[2:] - v[:-2]) / (2.0 * tau)
    lhs = traj.h[1:-1]
    scale = float(np.max(np.abs(v)))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(lhs - rhs)) / scale)


def squeezed_state(cfg: OracleConfig, kappa=1.0, x0=0.0, p0=0.0):
    """Gaussian of width ``kappa`` times the ground width, displaced by ``x0`` (m) and boosted by ``p0`` (kg m/s)."""
    n, L = cfg.grid_points, cfg.half_width
    x = grid_points(n, L)
    xs = x0 / cfg.ell
    ps = p0 * cfg.ell / constants.HBAR
    psi = np.exp(-0.5 * ((x - xs) / kappa) ** 2 + 1j * ps * x)
    return GridWavefunction(psi, L, cfg.ell).normalized()


# --- snapshot files ---------------------------------------------------------------

def write_snapshot(path, wf: GridWavefunction, dt, step):
    """Header (magic, N, L in metres, dt, step) padded to 64 bytes, then complex doubles."""
    head = _HEADER.pack(SNAPSHOT_MAGIC, wf.points, wf.half_width * wf.ell, float(dt), int(step))
    head = head.ljust(HEADER_SIZE, b"\0")
    body = np.ascontiguousarray(wf.psi, dtype="<c16").tobytes()
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".snap")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(head + body)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_snapshot(path, ell):
    """Inverse of :func:`write_snapshot`; returns ``(wf, dt, step)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER_SIZE:
        raise OracleError("snapshot truncated")
    magic, n, L, dt, step = _HEADER.unpack(raw[: _HEADER.size])
    if magic != SNAPSHOT_MAGIC:
        raise OracleError("not a wave-function snapshot")
    body = raw[HEADER_SIZE:]
    if len(body) != 16 * n:
        raise OracleError(f"expected {n} samples, found {len(body) // 16}")
    psi = np.frombuffer(body, dtype="<c16").astype(complex)
    return GridWavefunction(psi, L / ell, ell), dt, step
