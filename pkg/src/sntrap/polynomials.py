"""Exact Hermite polynomials and the even pair-distance polynomials ``P_n``.

``P_n`` is defined through a Gaussian-weighted integral of squared Hermite
polynomials.  Completing the square in the exponent shows that both halves
of the defining integrand are equal, and with ``w = z/2``::

    P_n(z) = 2 / (sqrt(2 pi) (2^n n!)^2)
             * Int exp(-2 eta^2) [H_n(eta + w) H_n(eta - w)]^2 d eta

The bracket is expanded binomially into a bivariate integer polynomial in
``(eta, w)`` and the ``eta`` moments ``Int eta^2k exp(-2 eta^2)`` are applied
exactly, so every coefficient is an exact rational number.

``sqrt(2/pi) exp(-u^2/2) P_n(u)`` on ``u >= 0`` is the probability density
of ``|xi - xi'|`` for two independent draws from the n-th oscillator
eigenstate (``xi`` in units of ``sqrt(hbar / m omega0)``); ``pair_density``
evaluates it in floating point without forming the large polynomial
coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

HERMITE_MAX = 30
P_MAX = 14


@dataclass(frozen=True)
class HermitePolynomial:
    """Physicists' Hermite polynomial; ``coeffs[k]`` multiplies ``x**k``."""

    coeffs: tuple

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(x, [float(c) for c in self.coeffs])


@dataclass(frozen=True)
class EvenPolynomial:
    """Polynomial in ``z**2``; ``coeffs[j]`` multiplies ``z**(2j)``."""

    coeffs: tuple

    def __post_init__(self):
        if not self.coeffs or self.coeffs[-1] == 0:
            raise ValueError("leading coefficient must be nonzero")

    @property
    def degree(self):
        return 2 * (len(self.coeffs) - 1)

    def at(self, z):
        """Exact value at a rational point."""
        z2 = Fraction(z) ** 2
        return sum((c * z2**j for j, c in enumerate(self.coeffs)), Fraction(0))

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return np.polynomial.polynomial.polyval(z * z, [float(c) for c in self.coeffs])

    def full_coeffs(self):
        """Coefficients of all powers ``z**0 ... z**degree`` (odd ones zero)."""
        out = [Fraction(0)] * (self.degree + 1)
        for j, c in enumerate(self.coeffs):
            out[2 * j] = c
        return out


def _double_factorial(k):
    # (k)!! with (-1)!! = 1
    out = 1
    while k > 1:
        out *= k
        k -= 2
    return out


@lru_cache(maxsize=None)
def hermite(n):
    """Physicists' Hermite polynomial ``H_n`` with exact integer coefficients."""
    if not 0 <= n <= HERMITE_MAX:
        raise ValueError(f"Hermite degree must be in [0, {HERMITE_MAX}], got {n}")
    prev, cur = (1,), (0, 2)
    if n == 0:
        return HermitePolynomial(prev)
    for k in range(1, n):
        # H_{k+1} = 2x H_k - 2k H_{k-1}
        nxt = [0] * (k + 2)
        for i, c in enumerate(cur):
            nxt[i + 1] += 2 * c
        for i, c in enumerate(prev):
            nxt[i] -= 2 * k * c
        prev, cur = cur, tuple(nxt)
    return HermitePolynomial(cur)


def _shifted(h, sign):
    """Bivariate expansion of ``H(eta + sign*w)`` as ``{(i, j): c}`` for ``eta^i w^j``."""
    out = {}
    for k, c in enumerate(h.coeffs):
        if c == 0:
            continue
        for j in range(k + 1):
            term = c * math.comb(k, j) * (sign**j)
            key = (k - j, j)
            out[key] = out.get(key, 0) + term
    return out


def _mul(a, b):
    out = {}
    for (i1, j1), c1 in a.items():
        for (i2, j2), c2 in b.items():
            key = (i1 + i2, j1 + j2)
            out[key] = out.get(key, 0) + c1 * c2
    return {k: v for k, v in out.items() if v != 0}


@lru_cache(maxsize=None)
def p_polynomial(n):
    """Exact even polynomial ``P_n(z)``.  Supported for ``0 <= n <= 14``."""
    if not 0 <= n <= P_MAX:
        raise ValueError(f"P_n is supported for 0 <= n <= {P_MAX}, got {n}")
    h = hermite(n)
    pair = _mul(_shifted(h, 1), _shifted(h, -1))
    bracket = _mul(pair, pair)
    norm = (2**n * math.factorial(n)) ** 2
    by_power = {}
    for (i, j), c in bracket.items():
        if i % 2:
            continue
        # Int eta^i exp(-2 eta^2) = (i-1)!! / 4^(i/2) * sqrt(pi/2); w^j = z^j / 2^j
        term = Fraction(c * _double_factorial(i - 1), 4 ** (i // 2) * 2**j)
        by_power[j] = by_power.get(j, Fraction(0)) + term
    if any(j % 2 and v != 0 for j, v in by_power.items()):
        raise ArithmeticError("odd power survived in P_n")
    top = max(j for j, v in by_power.items() if v != 0)
    coeffs = tuple(by_power.get(2 * k, Fraction(0)) / norm for k in range(top // 2 + 1))
    return EvenPolynomial(coeffs)


def gaussian_moment(poly, k=0):
    """Exact ``c`` with ``Int_0^inf u^k exp(-u^2/2) poly(u) du = c * sqrt(pi/2)``.

    Only even ``k`` keep the result a rational multiple of ``sqrt(pi/2)``.
    """
    if k < 0 or k % 2:
        raise ValueError("moment weight k must be a non-negative even integer")
    return sum(
        (c * _double_factorial(2 * j + k - 1) for j, c in enumerate(poly.coeffs)),
        Fraction(0),
    )


def wide_coefficient(n):
    """``F_n = P_n(0)``, the level dependence of the wide-wave-function shift."""
    return p_polynomial(n).coeffs[0]


@lru_cache(maxsize=None)
def dip_points(n):
    """Positive separations where ``w_n`` has its interior minima.

    ``P_n`` has no positive real roots; its zeros come in conjugate pairs
    close to the real axis, and their real parts mark the dips between the
    oscillations of the pair density.  Used as quadrature breakpoints.
    """
    if not 0 <= n <= P_MAX:
        raise ValueError(f"P_n is supported for 0 <= n <= {P_MAX}, got {n}")
    coeffs = [float(c) for c in p_polynomial(n).full_coeffs()]
    if len(coeffs) < 2:
        return ()
    roots = np.polynomial.polynomial.polyroots(coeffs)
    return tuple(sorted({round(float(r.real), 12) for r in roots if r.real > 0}))


# --- floating-point evaluation ----------------------------------------------

def hermite_functions(nmax, x):
    """Normalised oscillator eigenfunctions ``psi_0 .. psi_nmax`` at ``x``.

    Uses the three-term recurrence of the normalised functions, which stays
    finite where ``H_n(x)`` and ``exp(-x^2/2)`` separately would not.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax + 1,) + x.shape)
    out[0] = np.pi**-0.25 * np.exp(-0.5 * x * x)
    if nmax >= 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for k in range(2, nmax + 1):
        out[k] = math.sqrt(2.0 / k) * x * out[k - 1] - math.sqrt((k - 1) / k) * out[k - 2]
    return out


@lru_cache(maxsize=None)
def _gh_rule(npts):
    x, w = np.polynomial.hermite.hermgauss(npts)
    # weight exp(-2 eta^2): eta = x / sqrt(2)
    return x / math.sqrt(2.0), w / math.sqrt(2.0)


def pair_density(n, u):
    """``sqrt(2/pi) exp(-u^2/2) P_n(u)`` evaluated stably for any ``u``.

    Equals ``2 Int psi_n(eta + u/2)^2 psi_n(eta - u/2)^2 d eta``; a
    Gauss-Hermite rule with ``2n + 1`` nodes in ``exp(-2 eta^2)`` is exact
    for the polynomial part.
    """
    if not 0 <= n <= P_MAX:
        raise ValueError(f"P_n is supported for 0 <= n <= {P_MAX}, got {n}")
    u = np.asarray(u, dtype=float)
    eta, wts = _gh_rule(2 * n + 1)
    half = 0.5 * u[..., None]
    plus = hermite_functions(n, eta + half)[n]
    minus = hermite_functions(n, eta - half)[n]
    # undo the exp(-2 eta^2) weight that psi^2 psi^2 already carries
    scaled = wts * np.exp(2.0 * eta * eta)
    out = 2.0 * np.sum(scaled * (plus * minus) ** 2, axis=-1)
    return out if out.ndim else float(out)
