"""Gravitational self-interaction kernels of a crystalline sphere.

Dimensionless forms use ``zeta = d / (2 sigma)``.  The crystal kernel splits
into the self-energy of each atom with its displaced copy, ``S(zeta)``, and
the mutual term of the whole sphere, which has the shape of the homogeneous
sphere overlap evaluated at ``zeta / varrho``::

    i(zeta) = S(zeta) + (N / varrho) * h(zeta / varrho)

with ``h(x) = 6/5 - 2x^2 + 3/2 x^3 - 1/5 x^5`` for ``x <= 1`` and
``1 / (2x)`` beyond.  Expanding ``(N/varrho) h`` gives the familiar
``beta_k zeta^k`` coefficients, but this factorisation never forms large
powers of ``zeta``.

All evaluators are vectorised over ``zeta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .params import CrystalParams, DomainError, Family, Lattice

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
# below this zeta the Gaussian self term switches to its Taylor series
_SERIES_ZETA = 1e-4


# --- homogeneous sphere overlap shape --------------------------------------

def _overlap(x):
    x = np.asarray(x, dtype=float)
    xi, xo = np.minimum(x, 1.0), np.maximum(x, 1.0)
    inner = 6.0 / 5.0 - 2.0 * xi**2 + 1.5 * xi**3 - 0.2 * xi**5
    outer = 0.5 / xo
    return np.where(x <= 1.0, inner, outer)


def _overlap_shift(x):
    # h(x) - h(0)
    x = np.asarray(x, dtype=float)
    xi, xo = np.minimum(x, 1.0), np.maximum(x, 1.0)
    inner = xi * xi * (-2.0 + xi * (1.5 - 0.2 * xi * xi))
    outer = 0.5 / xo - 1.2
    return np.where(x <= 1.0, inner, outer)


def _overlap_prime(x):
    x = np.asarray(x, dtype=float)
    xi, xo = np.minimum(x, 1.0), np.maximum(x, 1.0)
    inner = -4.0 * xi + 4.5 * xi**2 - xi**4
    outer = -0.5 / xo**2
    return np.where(x <= 1.0, inner, outer)


def _overlap_combo(x):
    # x h'(x) + 2 h(x)
    x = np.asarray(x, dtype=float)
    xi, xo = np.minimum(x, 1.0), np.maximum(x, 1.0)
    inner = 12.0 / 5.0 - 8.0 * xi**2 + 7.5 * xi**3 - 1.4 * xi**5
    outer = 0.5 / xo
    return np.where(x <= 1.0, inner, outer)


def _overlap_combo_shift(x):
    # x h'(x) + 2 h(x) - 12/5
    x = np.asarray(x, dtype=float)
    xi, xo = np.minimum(x, 1.0), np.maximum(x, 1.0)
    inner = xi * xi * (-8.0 + xi * (7.5 - 1.4 * xi * xi))
    outer = 0.5 / xo - 2.4
    return np.where(x <= 1.0, inner, outer)


def sphere_overlap(d, R, m):
    """Overlap energy kernel ``I(d)`` of two homogeneous spheres (kg^2/m).

    ``G * sphere_overlap(d, R, m)`` is the gravitational binding energy
    between a sphere of radius ``R`` and mass ``m`` and its copy shifted by
    ``d``.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise DomainError("separation must be non-negative")
    if not (R > 0 and m > 0):
        raise DomainError("radius and mass must be positive")
    out = m**2 / R * _overlap(d / (2.0 * R))
    return out if out.ndim else float(out)


# --- self terms --------------------------------------------------------------

def _erf_ratio(zeta):
    """``erf(sqrt(2) zeta) / (2 zeta)`` with its removable singularity at 0."""
    z = np.asarray(zeta, dtype=float)
    small = z < _SERIES_ZETA
    zs = np.where(small, 1.0, z)
    exact = erf(math.sqrt(2.0) * zs) / (2.0 * zs)
    z2 = z * z
    series = SQRT_2_OVER_PI * (1.0 - 2.0 * z2 / 3.0 + 0.4 * z2 * z2)
    return np.where(small, series, exact)


def _erf_ratio_prime(zeta):
    z = np.asarray(zeta, dtype=float)
    small = z < _SERIES_ZETA
    zs = np.where(small, 1.0, z)
    exact = (SQRT_2_OVER_PI * np.exp(-2.0 * zs * zs) - _erf_ratio(zs)) / zs
    series = SQRT_2_OVER_PI * (-4.0 * z / 3.0 + 1.6 * z**3)
    return np.where(small, series, exact)


def self_kernel(zeta, family):
    """Self-energy part ``S(zeta)`` of the dimensionless kernel."""
    if Family.parse(family) is Family.GAUSSIAN:
        return _erf_ratio(zeta)
    return _overlap(zeta)


def self_kernel_prime(zeta, family):
    if Family.parse(family) is Family.GAUSSIAN:
        return _erf_ratio_prime(zeta)
    return _overlap_prime(zeta)


def self_combo(zeta, family):
    """``zeta S' + 2 S`` for the self-energy part alone."""
    if Family.parse(family) is Family.GAUSSIAN:
        z = np.asarray(zeta, dtype=float)
        return SQRT_2_OVER_PI * np.exp(-2.0 * z * z) + _erf_ratio(z)
    return _overlap_combo(zeta)


# --- full crystal kernel -----------------------------------------------------

def _check(zeta, lattice):
    zeta = np.asarray(zeta, dtype=float)
    if np.any(zeta < 0):
        raise DomainError("zeta must be non-negative")
    if not isinstance(lattice, Lattice):
        raise TypeError("lattice must be a Lattice")
    return zeta


def _scalar(out):
    return out if out.ndim else float(out)


def i_dimensionless(zeta, lattice, family):
    """Dimensionless crystal kernel ``i(zeta, varrho)``."""
    zeta = _check(zeta, lattice)
    scale = lattice.N / lattice.varrho
    out = self_kernel(zeta, family) + scale * _overlap(zeta / lattice.varrho)
    return _scalar(out)


def i_prime(zeta, lattice, family):
    """``d i / d zeta``; at branch points the inner one-sided derivative."""
    zeta = _check(zeta, lattice)
    scale = lattice.N / lattice.varrho**2
    out = self_kernel_prime(zeta, family) + scale * _overlap_prime(zeta / lattice.varrho)
    return _scalar(out)


def dynamics_combo(zeta, lattice, family):
    """``zeta i'(zeta) + 2 i(zeta)``, the kernel entering the width dynamics."""
    zeta = _check(zeta, lattice)
    scale = lattice.N / lattice.varrho
    out = self_combo(zeta, family) + scale * _overlap_combo(zeta / lattice.varrho)
    return _scalar(out)


def self_shift(zeta, family):
    """``S(zeta) - S(0)`` of the self-energy part, free of cancellation near 0."""
    z = np.asarray(zeta, dtype=float)
    if Family.parse(family) is not Family.GAUSSIAN:
        return _overlap_shift(z)
    small = z < 1e-3
    zs = np.where(small, 1.0, z)
    z2 = z * z
    series = SQRT_2_OVER_PI * z2 * (-2.0 / 3.0 + z2 * (0.4 + z2 * (-4.0 / 21.0 + z2 * (2.0 / 27.0))))
    return np.where(small, series, _erf_ratio(zs) - SQRT_2_OVER_PI)


def i_variable(zeta, lattice, family):
    """``i(zeta) - i(0)`` formed term by term."""
    zeta = _check(zeta, lattice)
    out = self_shift(zeta, family) + lattice.N / lattice.varrho * _overlap_shift(zeta / lattice.varrho)
    return _scalar(out)


def constant_part(lattice, family):
    """Value of ``i`` at ``zeta = 0``: ``6/5 gamma_0`` or ``sqrt(2/pi) + 6/5 beta_0``."""
    self0 = SQRT_2_OVER_PI if Family.parse(family) is Family.GAUSSIAN else 6.0 / 5.0
    return self0 + 6.0 / 5.0 * lattice.beta(0)


@dataclass(frozen=True)
class KernelModel:
    """Crystal kernel of a given atomic mass-distribution family."""

    family: Family
    params: CrystalParams

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))

    @property
    def lattice(self):
        return self.params.lattice

    @property
    def scale(self):
        """``m^2 / (N sigma)``: converts dimensionless kernels to kg^2/m."""
        p = self.params
        return p.m * p.m_atom / p.sigma

    def __call__(self, d):
        return crystal_kernel(d, self)

    def i(self, zeta):
        return i_dimensionless(zeta, self.lattice, self.family)

    def i_prime(self, zeta):
        return i_prime(zeta, self.lattice, self.family)

    def combo(self, zeta):
        return dynamics_combo(zeta, self.lattice, self.family)


def crystal_kernel(d, model):
    """Dimensional crystal kernel ``I_cr(d)`` in kg^2/m (even in ``d``; pass ``|d|``)."""
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise DomainError("separation must be non-negative")
    zeta = d / (2.0 * model.params.sigma)
    out = model.scale * np.asarray(model.i(zeta))
    return _scalar(out)
