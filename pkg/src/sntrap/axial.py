"""Level shifts in an axially symmetric trap excited along its axis only.

The trap has frequency ``omega0`` along ``x`` and ``mu * omega0``
transversally, and the transverse motion is in its ground state.  With the
Gaussian atomic profile in the large-sphere limit the spectral integral is::

    f_n(alpha, mu) = alpha^2 E[ k(|r - r'| / (2 sigma)) ],   k(zeta) = erf(sqrt2 zeta) / (2 zeta)

for two independent draws ``r, r'`` from the unperturbed density.  Along the
axis the draws follow ``psi_n(xi)^2``; transversally, the substitution
``u = exp(-mu s^2)`` makes the radial coordinates uniform on ``(0, 1)``.
The Monte-Carlo route integrates over ``(xi, xi', u, u', phi)``; a
deterministic reduction to two dimensions, using that the squared
transverse separation is exponentially distributed with mean ``2 / mu``,
serves as an independent check.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kernels import SQRT_2_OVER_PI, _erf_ratio
from .params import DomainError
from .parallel import pmap
from .polynomials import hermite_functions, pair_density
from .quadrature import ConvergenceError, McConfig, QuadResult, integrate_1d, integrate_mc
from .results import SweepResult
from .spectrum import f_n_intermediate, _cutoff

AXIAL_N_MAX = 6
XI_MAX = 8.0
DEFAULT_MC = McConfig(seed=20240607, target_rel_error=1e-3, max_samples=8_000_000,
                      strata_per_dim=24, stratify_dims=(0, 1))


@dataclass(frozen=True)
class AxialQuery:
    n: int
    alpha: float
    mu: float
    mc: McConfig = DEFAULT_MC

    def __post_init__(self):
        if not (isinstance(self.n, (int, np.integer)) and 0 <= self.n <= AXIAL_N_MAX):
            raise DomainError(f"n must be an integer in [0, {AXIAL_N_MAX}], got {self.n!r}")
        if not self.alpha > 0:
            raise DomainError("alpha must be positive")
        if not self.mu > 0:
            raise DomainError("mu must be positive")


@dataclass(frozen=True)
class AxialResult(QuadResult):
    clamped: int = 0  # negative radicands set to zero
    violations: int = 0  # of those, magnitudes above 1e-14


class _Integrand:
    """Vectorised 5-D integrand with a guard on the squared separation."""

    def __init__(self, n, alpha, mu):
        self.n, self.alpha, self.mu = n, alpha, mu
        self.clamped = 0
        self.violations = 0
        self._lock = threading.Lock()

    def __call__(self, pts):
        xi, xj, u, v, phi = pts.T
        # -ln u >= 0 for u in (0, 1]; keep u away from 0 exactly
        a = -np.log(np.maximum(u, 1e-300)) / self.mu
        b = -np.log(np.maximum(v, 1e-300)) / self.mu
        d = xi - xj
        rad = d * d + a + b - 2.0 * np.sqrt(a * b) * np.cos(phi)
        neg = rad < 0
        if neg.any():
            with self._lock:
                self.clamped += int(neg.sum())
                self.violations += int((rad[neg] < -1e-14).sum())
            rad = np.where(neg, 0.0, rad)
        zeta = np.sqrt(rad) / self.alpha
        psi_i = hermite_functions(self.n, xi)[self.n]
        psi_j = hermite_functions(self.n, xj)[self.n]
        # phi on [0, pi] stands for [0, 2 pi]: density 1/pi
        return self.alpha**2 * (psi_i * psi_j) ** 2 * _erf_ratio(zeta) / math.pi


def f_n_axial(q: AxialQuery) -> AxialResult:
    """Stratified Monte-Carlo estimate of the axial spectral integral.

    Raises
    ------
    ConvergenceError
        The sample budget ran out; ``exc.result`` is the partial estimate.
    """
    f = _Integrand(q.n, q.alpha, q.mu)
    lower = [-XI_MAX, -XI_MAX, 0.0, 0.0, 0.0]
    upper = [XI_MAX, XI_MAX, 1.0, 1.0, math.pi]
    try:
        res = integrate_mc(f, lower, upper, q.mc)
    except ConvergenceError as exc:
        r = exc.result
        exc.result = AxialResult(r.value, r.error_estimate, r.evaluations, f.clamped, f.violations)
        raise
    return AxialResult(res.value, res.error_estimate, res.evaluations, f.clamped, f.violations)


def f_n_axial_reduced(n, alpha, mu, rel_tol=1e-11, laguerre_nodes=96):
    """Deterministic two-dimensional form of the axial integral.

    ``alpha^2 Int w_n(u) Int (mu/2) exp(-mu t/2) k(sqrt(u^2 + t) / alpha) dt du``,
    with the ``t`` integral done by Gauss-Laguerre quadrature (the kernel is
    analytic in ``t``).
    """
    if not (alpha > 0 and mu > 0):
        raise DomainError("alpha and mu must be positive")
    x, w = np.polynomial.laguerre.laggauss(laguerre_nodes)
    t = 2.0 * x / mu

    def integrand(u):
        u = np.asarray(u, dtype=float)
        r = np.sqrt(u[..., None] ** 2 + t) / alpha
        return pair_density(n, u) * (_erf_ratio(r) @ w)

    top = _cutoff(n)
    res = integrate_1d(integrand, 0.0, top, rel_tol=rel_tol,
                       breakpoints=np.linspace(0, top, n + 3)[1:-1].tolist())
    return alpha**2 * res.value


def f_n_line(n, alpha):
    """One-dimensional counterpart with the same kernel (constant included)."""
    return f_n_intermediate(n, alpha, "gaussian").total + SQRT_2_OVER_PI * alpha**2


def shift_of(mu):
    """``k`` with ``mu = 2^-k`` when ``mu`` is such a power, else ``None``."""
    k = -math.log2(mu)
    return int(round(k)) if abs(k - round(k)) < 1e-12 else None


def sweep_axial(levels: Sequence[int], alphas: Sequence[float], mu: float,
                mc: McConfig = DEFAULT_MC, threads=None) -> SweepResult:
    """Tabulate ``f_n - f_{n+1}`` in the axial trap with 1-D references.

    Columns: ``alpha, n, value, std_error, ref_1d`` (the 1-D difference for
    the same ``n``) and ``ref_1d_shifted`` (the 1-D difference ``k`` levels up
    when ``mu = 2^-k``, else NaN).  Each point uses its own seed derived from
    ``mc.seed`` and the grid position, so reruns are identical.
    """
    alphas = [float(a) for a in alphas]
    levels = list(levels)
    if not alphas:
        raise DomainError("alpha grid is empty")
    if not levels:
        raise DomainError("level list is empty")
    k = shift_of(mu)
    jobs = [(a, n) for a in alphas for n in levels]
    seeds = np.random.SeedSequence(mc.seed).generate_state(2 * len(jobs), dtype=np.uint64)

    def cfg_for(i, which):
        s = int(seeds[2 * i + which])
        return McConfig(seed=s, target_rel_error=mc.target_rel_error, max_samples=mc.max_samples,
                        strata_per_dim=mc.strata_per_dim, stratify_dims=mc.stratify_dims,
                        pilot_per_stratum=mc.pilot_per_stratum, threads=1)

    def point(i):
        a, n = jobs[i]
        err = ""
        parts = []
        for which, level in enumerate((n, n + 1)):
            try:
                parts.append(f_n_axial(AxialQuery(level, a, mu, cfg_for(i, which))))
            except ConvergenceError as exc:
                parts.append(exc.result)
                err = str(exc)
        value = parts[0].value - parts[1].value
        se = math.hypot(parts[0].error_estimate, parts[1].error_estimate)
        ref = f_n_line(n, a) - f_n_line(n + 1, a)
        shifted = f_n_line(n + k, a) - f_n_line(n + k + 1, a) if k is not None and n + k >= 0 else math.nan
        return (a, n, value, se, ref, shifted), err

    out = SweepResult(("alpha", "n", "value", "std_error", "ref_1d", "ref_1d_shifted"))
    for row, err in pmap(point, range(len(jobs)), threads):
        out.append(row, err)
    out.meta = {"mu": mu, "seed": mc.seed, "target_rel_error": mc.target_rel_error,
                "max_samples": mc.max_samples, "shift": k}
    return out
