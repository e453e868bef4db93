"""Brake orbits, degenerate conformal-metric geodesics, boundary distance
and Morse index for natural Hamiltonian systems."""

from ._kernels import BACKEND as kernel_backend  # noqa: F401
from .curves import (  # noqa: F401
    BrakeOrbit,
    JacobiGeodesic,
    NaturalTrajectory,
    ReparamMap,
    graded_grid,
)
from .errors import BrakeOrbitError  # noqa: F401
from .geometry import PotentialSystem, load_system, make_system  # noqa: F401

__version__ = "0.1.0"
