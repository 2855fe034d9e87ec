"""Physical constants (CODATA 2018 recommended values).

The digits below are the full published values. They are fixed here rather
than pulled from ``scipy.constants`` so that tabulated outputs do not drift
with the installed scipy version.
"""

#: Newtonian constant of gravitation, m^3 kg^-1 s^-2
G = 6.67430e-11

#: Reduced Planck constant, J s
HBAR = 1.054571817e-34

#: Unified atomic mass unit, kg
AMU = 1.66053906660e-27

CODATA_RELEASE = "2018"


def digest():
    """Short string identifying the constant set, for run manifests."""
    return f"CODATA{CODATA_RELEASE}:G={G!r};hbar={HBAR!r};u={AMU!r}"
