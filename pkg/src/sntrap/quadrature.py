"""Adaptive 1-D Gauss-Kronrod quadrature and seeded stratified Monte Carlo.

The 1-D integrator bisects the interval with the largest error estimate
until the summed estimate meets the tolerance.  Integrands must accept a
numpy array and return an array of the same shape; a whole batch of
subintervals is evaluated in a single call.
"""

from __future__ import annotations

import heapq
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class QuadResult:
    value: float
    error_estimate: float
    evaluations: int

    def __post_init__(self):
        if self.error_estimate < 0:
            raise ValueError("error estimate must be non-negative")


class ConvergenceError(RuntimeError):
    """Tolerance not reached; ``result`` holds the best available estimate."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


# --- Gauss-Kronrod 10/21 nodes on [-1, 1] -------------------------------------

_XGK = np.array([
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.0,
])
_WGK = np.array([
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077600525430349,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
])
# Gauss weights sit on the odd Kronrod nodes (index 1, 3, ..., 9)
_WG = np.array([
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
])

_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KW = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GW = np.zeros(21)
_GW[[1, 3, 5, 7, 9]] = _WG
_GW[[19, 17, 15, 13, 11]] = _WG

_EPS = np.finfo(float).eps


def _gk21(f, lo, hi):
    """Apply the 21-point rule to arrays of subintervals; returns (value, error)."""
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    x = center[:, None] + half[:, None] * _NODES[None, :]
    fx = np.asarray(f(x), dtype=float)
    if fx.shape != x.shape:
        fx = np.broadcast_to(fx, x.shape)
    if not np.all(np.isfinite(fx)):
        raise FloatingPointError("integrand returned non-finite values")
    kron = fx @ _KW
    gauss = fx @ _GW
    resk = kron * half
    # QUADPACK error scaling
    mean = 0.5 * kron
    resasc = np.abs(half) * (np.abs(fx - mean[:, None]) @ _KW)
    resabs = np.abs(half) * (np.abs(fx) @ _KW)
    err = np.abs((kron - gauss) * half)
    with np.errstate(invalid="ignore", divide="ignore"):
        scaled = resasc * np.minimum(1.0, (200.0 * err / resasc) ** 1.5)
    err = np.where(resasc > 0, scaled, err)
    floor = 50.0 * _EPS * resabs
    err = np.where(resabs > np.finfo(float).tiny / (50 * _EPS), np.maximum(err, floor), err)
    return resk, err


def _semi_infinite(f, c):
    """Map ``[c, inf)`` onto ``(0, 1]`` with ``u = c - ln t``."""

    def g(t):
        u = c - np.log(t)
        return f(u) / t

    return g


def _neg_semi_infinite(f, c):
    """Map ``(-inf, c]`` onto ``(0, 1]`` with ``u = c + ln t``."""

    def g(t):
        u = c + np.log(t)
        return f(u) / t

    return g


def integrate_1d(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    rel_tol: float = 1e-10,
    abs_tol: float = 0.0,
    breakpoints: Optional[Sequence[float]] = None,
    max_intervals: int = 4000,
    batch: int = 16,
) -> QuadResult:
    """Integrate a vectorised ``f`` over ``[a, b]``; ``b`` may be ``np.inf``.

    Parameters
    ----------
    f : callable
        Vectorised integrand.
    a, b : float
        Limits.  Infinite limits are mapped to ``(0, 1]`` by a logarithmic
        substitution, which suits the Gaussian-damped integrands used here.
    rel_tol, abs_tol : float
        Stop once the summed error estimate is below
        ``max(rel_tol * |value|, abs_tol)``.
    breakpoints : sequence of float, optional
        Interior points where ``f`` has kinks; they become initial
        subinterval edges.
    max_intervals : int
        Budget of subintervals.  Exceeding it raises ``ConvergenceError``.

    Raises
    ------
    ConvergenceError
        The tolerance could not be met.  ``exc.result`` holds the estimate.
    """
    if not (rel_tol >= 0 and abs_tol >= 0) or (rel_tol == 0 and abs_tol == 0):
        raise ValueError("need a positive rel_tol or abs_tol")
    if math.isnan(a) or math.isnan(b):
        raise ValueError("limits must not be NaN")
    if a == b:
        return QuadResult(0.0, 0.0, 1)
    if a > b:
        res = integrate_1d(f, b, a, rel_tol, abs_tol, breakpoints, max_intervals, batch)
        return QuadResult(-res.value, res.error_estimate, res.evaluations)

    pieces = []  # (function, lo, hi) in mapped coordinates
    finite_lo = a if math.isfinite(a) else None
    finite_hi = b if math.isfinite(b) else None
    pts = sorted(p for p in (breakpoints or ()) if a < p < b)
    if finite_lo is None and finite_hi is None:
        pts = pts or [0.0]
    edges = ([a] if finite_lo is not None else []) + pts + ([b] if finite_hi is not None else [])
    if finite_lo is None:
        pieces.append((_neg_semi_infinite(f, edges[0]), 0.0, 1.0))
    for lo, hi in zip(edges[:-1], edges[1:]):
        pieces.append((f, lo, hi))
    if finite_hi is None:
        pieces.append((_semi_infinite(f, edges[-1]), 0.0, 1.0))

    total_val = 0.0
    total_err = 0.0
    evaluations = 0
    results = []
    for fn, lo, hi in pieces:
        val, err, nev, ok = _adaptive(fn, lo, hi, rel_tol, abs_tol / len(pieces), max_intervals, batch)
        total_val += val
        total_err += err
        evaluations += nev
        results.append(ok)
    out = QuadResult(float(total_val), float(total_err), evaluations)
    if not all(results) and total_err > max(rel_tol * abs(total_val), abs_tol):
        raise ConvergenceError(
            f"quadrature did not reach tolerance (value {total_val:.6g}, "
            f"error {total_err:.3g})",
            out,
        )
    return out


def _adaptive(f, a, b, rel_tol, abs_tol, max_intervals, batch):
    lo = np.array([a], dtype=float)
    hi = np.array([b], dtype=float)
    val, err = _gk21(f, lo, hi)
    nev = 21
    # max-heap on error: entries (-err, counter, lo, hi, val)
    heap = [(-err[0], 0, a, b, val[0])]
    counter = 1
    total_val = float(val[0])
    total_err = float(err[0])
    while True:
        tol = max(rel_tol * abs(total_val), abs_tol)
        if total_err <= tol:
            return total_val, total_err, nev, True
        if len(heap) >= max_intervals:
            return total_val, total_err, nev, False
        take = [heapq.heappop(heap) for _ in range(min(batch, len(heap)))]
        # stop splitting intervals that cannot be resolved further
        splittable = [t for t in take if (t[3] - t[2]) > 1e3 * _EPS * max(abs(t[2]), abs(t[3]), 1e-300)]
        if not splittable:
            for t in take:
                heapq.heappush(heap, t)
            return total_val, total_err, nev, False
        for t in take:
            if t not in splittable:
                heapq.heappush(heap, t)
        los = np.array([t[2] for t in splittable])
        his = np.array([t[3] for t in splittable])
        mids = 0.5 * (los + his)
        v, e = _gk21(f, np.concatenate([los, mids]), np.concatenate([mids, his]))
        nev += 21 * v.size
        k = len(splittable)
        for i, t in enumerate(splittable):
            total_val += v[i] + v[i + k] - t[4]
            total_err += e[i] + e[i + k] + t[0]
            heapq.heappush(heap, (-e[i], counter, los[i], mids[i], v[i]))
            heapq.heappush(heap, (-e[i + k], counter + 1, mids[i], his[i], v[i + k]))
            counter += 2
        # re-sum occasionally to avoid drift from incremental updates
        if counter % 512 < 2 * batch:
            total_val = math.fsum(h[4] for h in heap)
            total_err = math.fsum(-h[0] for h in heap)


# --- stratified Monte Carlo --------------------------------------------------------

@dataclass(frozen=True)
class McConfig:
    """Settings for :func:`integrate_mc`.

    ``stratify_dims`` lists the coordinates that are stratified on a regular
    grid with ``strata_per_dim`` cells each; remaining coordinates are
    sampled uniformly inside every stratum.
    """

    seed: int = 0
    target_rel_error: float = 1e-3
    max_samples: int = 2_000_000
    strata_per_dim: int = 8
    stratify_dims: Optional[tuple] = None
    pilot_per_stratum: int = 32
    threads: int = 1

    def __post_init__(self):
        if not self.target_rel_error > 0:
            raise ValueError("target_rel_error must be positive")
        if self.max_samples < 1 or self.strata_per_dim < 1 or self.pilot_per_stratum < 2:
            raise ValueError("sample counts must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class _Stratum:
    lo: np.ndarray
    hi: np.ndarray
    rng: np.random.Generator
    n: int = 0
    s1: float = 0.0
    s2: float = 0.0

    @property
    def volume(self):
        return float(np.prod(self.hi - self.lo))

    def variance(self):
        if self.n < 2:
            return 0.0
        mean = self.s1 / self.n
        return max(self.s2 / self.n - mean * mean, 0.0) * self.n / (self.n - 1)


def _sample(f, stratum, count):
    u = stratum.rng.random((count, stratum.lo.size))
    x = stratum.lo + u * (stratum.hi - stratum.lo)
    y = np.asarray(f(x), dtype=float)
    if y.shape != (count,):
        raise ValueError("integrand must map an (n, k) array to n values")
    # pairwise summation in numpy keeps the totals deterministic
    return count, float(np.sum(y)), float(np.sum(y * y))


def integrate_mc(f, lower, upper, cfg: McConfig = McConfig()) -> QuadResult:
    """Stratified Monte-Carlo integral of ``f`` over a box.

    ``f`` receives an ``(n, k)`` array of points and returns ``n`` values.
    After a pilot round the remaining budget is spent in doubling rounds
    allocated across strata by the Neyman rule (proportional to volume times
    standard deviation).  Every stratum owns a generator spawned from the
    seed, and totals are reduced in stratum order, so results do not depend
    on ``cfg.threads``.

    Raises
    ------
    ConvergenceError
        ``max_samples`` exhausted before ``target_rel_error`` was met.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != upper.shape or lower.ndim != 1:
        raise ValueError("bounds must be 1-D arrays of equal length")
    if np.any(upper <= lower):
        raise ValueError("upper bounds must exceed lower bounds")
    dims = tuple(range(lower.size)) if cfg.stratify_dims is None else tuple(cfg.stratify_dims)
    k = cfg.strata_per_dim
    cells = np.stack(np.meshgrid(*[np.arange(k)] * len(dims), indexing="ij"), -1).reshape(-1, len(dims))
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(cells))
    strata = []
    for cell, ss in zip(cells, seeds):
        lo, hi = lower.copy(), upper.copy()
        for d, c in zip(dims, cell):
            width = (upper[d] - lower[d]) / k
            lo[d] = lower[d] + c * width
            hi[d] = lower[d] + (c + 1) * width
        strata.append(_Stratum(lo, hi, np.random.Generator(np.random.PCG64(ss))))

    if cfg.max_samples < 2 * len(strata):
        raise ValueError(f"max_samples must allow two samples in each of {len(strata)} strata")
    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None

    def run(counts):
        jobs = [(s, c) for s, c in zip(strata, counts) if c > 0]
        if pool is None:
            outs = [_sample(f, s, c) for s, c in jobs]
        else:
            outs = list(pool.map(lambda sc: _sample(f, *sc), jobs))
        for (s, _), (n, a1, a2) in zip(jobs, outs):
            s.n += n
            s.s1 += a1
            s.s2 += a2

    def estimate():
        value = math.fsum(s.volume * s.s1 / s.n for s in strata)
        var = math.fsum(s.volume**2 * s.variance() / s.n for s in strata)
        return value, math.sqrt(var)

    try:
        pilot = min(cfg.pilot_per_stratum, cfg.max_samples // len(strata))
        run([pilot] * len(strata))
        used = pilot * len(strata)
        value, err = estimate()
        round_size = used
        while err > cfg.target_rel_error * abs(value) and used < cfg.max_samples:
            round_size = min(2 * round_size, cfg.max_samples - used)
            if round_size < len(strata):
                break
            weights = np.array([s.volume * math.sqrt(s.variance()) for s in strata])
            # small floor keeps every stratum's variance estimate alive
            floor = max(1, round_size // (20 * len(strata)))
            if weights.sum() > 0:
                share = weights / weights.sum() * (round_size - floor * len(strata))
                counts = floor + np.floor(np.maximum(share, 0)).astype(int)
            else:
                counts = np.full(len(strata), max(1, round_size // len(strata)))
            run(list(counts))
            used += int(counts.sum())
            value, err = estimate()
    finally:
        if pool is not None:
            pool.shutdown()
    out = QuadResult(float(value), float(err), int(used))
    if err > cfg.target_rel_error * abs(value):
        raise ConvergenceError(
            f"Monte Carlo budget exhausted: relative error {err / abs(value) if value else math.inf:.3g}",
            out,
        )
    return out
