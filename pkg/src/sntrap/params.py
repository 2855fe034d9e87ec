"""Material presets and the dimensionless parameter map of a trapped microsphere."""

from __future__ import annotations

import configparser
import enum
import math
from dataclasses import dataclass
from importlib import resources

from . import constants


class DomainError(ValueError):
    """An input lies outside the domain where a quantity is defined."""


class Family(str, enum.Enum):
    """Mass distribution of a single atom inside the crystal."""

    SPHERE = "sphere"
    GAUSSIAN = "gaussian"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"gauss": "gaussian", "homogeneous-sphere": "sphere"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class Material:
    name: str
    m_atom: float  # kg
    sigma: float  # m
    bulk_density: float  # kg/m^3

    def __post_init__(self):
        for field in ("m_atom", "sigma", "bulk_density"):
            value = getattr(self, field)
            if not (value > 0 and math.isfinite(value)):
                raise DomainError(f"{field} must be positive and finite, got {value!r}")

    def with_sigma(self, sigma):
        return Material(self.name, self.m_atom, sigma, self.bulk_density)


@dataclass(frozen=True)
class Lattice:
    """Dimensionless crystal shape: atom count ``N`` and ``varrho = R / sigma``.

    ``beta(k) = N (sigma/R)^(k+1)`` is evaluated in logs so that N up to
    1e20 and large radii never overflow.
    """

    N: float
    varrho: float

    def __post_init__(self):
        if not (self.N > 0 and math.isfinite(self.N)):
            raise DomainError(f"atom count must be positive, got {self.N!r}")
        if not (self.varrho >= 1 and math.isfinite(self.varrho)):
            raise DomainError(f"varrho = R/sigma must be >= 1, got {self.varrho!r}")

    def beta(self, k):
        return math.exp(math.log(self.N) - (k + 1) * math.log(self.varrho))

    def gamma(self, k):
        return 1.0 + self.beta(k)

    @property
    def packing(self):
        """N sigma^3 / R^3, the volume fraction occupied by atomic spheres."""
        return self.beta(2)

    @classmethod
    def from_packing(cls, varrho, packing):
        return cls(N=packing * varrho**3, varrho=varrho)


@dataclass(frozen=True)
class CrystalParams:
    material: Material
    m: float  # total mass, kg
    R: float  # sphere radius, m
    N: float  # atom count (real)
    a: float  # lattice spacing, m
    varrho: float  # R / sigma

    @property
    def lattice(self):
        return Lattice(self.N, self.varrho)

    def beta_k(self, k):
        return self.lattice.beta(k)

    def gamma_k(self, k):
        return self.lattice.gamma(k)

    @property
    def sigma(self):
        return self.material.sigma

    @property
    def m_atom(self):
        return self.material.m_atom


@dataclass(frozen=True)
class TrapContext:
    omega0: float  # rad/s
    alpha: float  # 2 sigma sqrt(m omega0 / hbar)
    mu: float = 1.0  # transverse / longitudinal frequency ratio

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha!r}")
        if not self.mu > 0:
            raise DomainError(f"mu must be positive, got {self.mu!r}")


def crystal_params(material, m):
    """Geometry of a homogeneous sphere of ``material`` with total mass ``m``."""
    if not (m > 0 and math.isfinite(m)):
        raise DomainError(f"mass must be positive, got {m!r}")
    if m < material.m_atom:
        raise DomainError("mass is smaller than a single atom")
    R = (3.0 * m / (4.0 * math.pi * material.bulk_density)) ** (1.0 / 3.0)
    N = m / material.m_atom
    a = (material.m_atom / material.bulk_density) ** (1.0 / 3.0)
    return CrystalParams(material=material, m=m, R=R, N=N, a=a, varrho=R / material.sigma)


def alpha_of(sigma, m, omega0, hbar=constants.HBAR):
    return 2.0 * sigma * math.sqrt(m * omega0 / hbar)


def mass_for_alpha(material, alpha, omega0, hbar=constants.HBAR):
    """Inverse of the width parameter: the mass giving ``alpha`` at ``omega0``."""
    return alpha**2 * hbar / (4.0 * material.sigma**2 * omega0)


def derive_params(material, m, omega0, mu=1.0):
    """Return ``(CrystalParams, TrapContext)`` for a sphere of mass ``m`` in a trap."""
    if not (omega0 > 0 and math.isfinite(omega0)):
        raise DomainError(f"omega0 must be positive, got {omega0!r}")
    params = crystal_params(material, m)
    trap = TrapContext(omega0=omega0, alpha=alpha_of(material.sigma, m, omega0), mu=mu)
    return params, trap


GAUSS_CONVENTIONS = ("standard", "alternative")


def sn_frequency_squared(material, family=Family.SPHERE, G=constants.G, gauss_convention="standard"):
    """Characteristic Schroedinger-Newton frequency squared, s^-2.

    Homogeneous atomic spheres give ``G m_atom / sigma^3``; Gaussian atoms
    carry the extra factor ``sqrt(2/pi) / 3``.  ``gauss_convention=
    "alternative"`` divides the Gaussian frequency by ``sqrt(2)``, the
    normalisation found in some earlier treatments; it is for comparison
    only and nothing else in the package uses it.
    """
    if gauss_convention not in GAUSS_CONVENTIONS:
        raise ValueError(f"gauss_convention must be one of {GAUSS_CONVENTIONS}")
    base = G * material.m_atom / material.sigma**3
    if Family.parse(family) is Family.GAUSSIAN:
        w2 = math.sqrt(2.0 / math.pi) * base / 3.0
        return w2 / 2.0 if gauss_convention == "alternative" else w2
    return base


def sn_frequency(material, family=Family.SPHERE, G=constants.G, gauss_convention="standard"):
    return math.sqrt(sn_frequency_squared(material, family, G, gauss_convention))


def spectral_prefactor(material, omega0, G=constants.G):
    """``G m_atom / (4 sigma^3 omega0^2)``: scale of gravitational line shifts in hbar*omega0."""
    return G * material.m_atom / (4.0 * material.sigma**3 * omega0**2)


# --- presets -----------------------------------------------------------------

def _parse_materials(text):
    parser = configparser.ConfigParser()
    parser.read_string(text)
    out = {}
    for name in parser.sections():
        sec = parser[name]
        out[name] = Material(
            name=name,
            m_atom=float(sec["m_atom_u"]) * constants.AMU,
            sigma=float(sec["sigma_m"]),
            bulk_density=float(sec["density_kg_m3"]),
        )
    return out


def load_materials(path=None):
    """Read material presets from an INI-style key-value file.

    Without ``path`` the presets shipped with the package are used.
    """
    if path is None:
        text = resources.files(__package__).joinpath("materials.ini").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return _parse_materials(text)


def get_material(name, sigma=None):
    presets = load_materials()
    try:
        material = presets[name.lower()]
    except KeyError:
        raise DomainError(f"unknown material {name!r}; presets: {sorted(presets)}") from None
    return material if sigma is None else material.with_sigma(sigma)
