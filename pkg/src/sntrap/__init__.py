"""Schroedinger-Newton self-gravity of a trapped crystalline microsphere.

Spectral shifts, moment dynamics, an axially symmetric Monte-Carlo study and
a grid solver used as an independent oracle.
"""

__version__ = "0.1.0"
