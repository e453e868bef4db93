"""Shared fixtures: analytic test systems and their reference geodesics.

Session scope keeps the expensive geodesic lifts and Morse reports
computed once and reused across test modules.
"""

import numpy as np
import pytest

from brakeorbit.dynamics import boundary_start_arc, shoot_brake_orbit
from brakeorbit.geometry import make_system

A2 = 0.9 * np.pi / 4.0
A_ANISO = 0.999 * np.pi / 4.0


@pytest.fixture(scope="session")
def sys1():
    return make_system(dim=1, potential="harmonic", energy=0.5)


@pytest.fixture(scope="session")
def sys2():
    return make_system(dim=2, potential="harmonic", energy=0.5)


@pytest.fixture(scope="session")
def sys3():
    return make_system(dim=3, potential="harmonic", energy=0.5)


@pytest.fixture(scope="session")
def sys_aniso():
    return make_system(
        dim=2, potential="anisotropic_harmonic", energy=0.5, weights=[1.0, 4.0]
    )


@pytest.fixture(scope="session")
def orbit1(sys1):
    return shoot_brake_orbit(sys1, np.array([1.0]))


@pytest.fixture(scope="session")
def geo1_full(sys1):
    """Full 1D crossing geodesic, boundary to boundary (arc pi/4)."""
    return boundary_start_arc(sys1, np.array([1.0]), np.pi / 4.0)


@pytest.fixture(scope="session")
def geo2(sys2):
    return boundary_start_arc(sys2, np.array([1.0, 0.0]), A2)


@pytest.fixture(scope="session")
def geo3(sys3):
    return boundary_start_arc(sys3, np.array([1.0, 0.0, 0.0]), A2)


@pytest.fixture(scope="session")
def geo_aniso(sys_aniso):
    return boundary_start_arc(sys_aniso, np.array([1.0, 0.0]), A_ANISO)


@pytest.fixture(scope="session")
def mit2(sys2, geo2):
    from brakeorbit.morse import mit_verify

    return mit_verify(sys2, geo2, A2)


@pytest.fixture(scope="session")
def mit3(sys3, geo3):
    from brakeorbit.morse import mit_verify

    return mit_verify(sys3, geo3, A2)


@pytest.fixture(scope="session")
def mit_aniso(sys_aniso, geo_aniso):
    from brakeorbit.morse import mit_verify

    return mit_verify(sys_aniso, geo_aniso, A_ANISO)
