"""Newton integration, brake orbits and the time/arc correspondence."""

import numpy as np
import pytest

from brakeorbit.dynamics import (
    boundary_start_arc,
    geodesic_from_orbit,
    integrate_natural,
    orbit_from_geodesic,
    shoot_brake_orbit,
    time_of_arc,
)
from brakeorbit.errors import TruncationError


def test_harmonic_half_period_and_profile(sys1, orbit1):
    assert orbit1.half_period == pytest.approx(np.pi, abs=1e-6)
    t = orbit1.trajectory.times
    assert np.max(np.abs(orbit1.trajectory.positions[:, 0] - np.cos(t))) <= 1e-6
    assert orbit1.end == pytest.approx(-1.0, abs=1e-7)


def test_energy_conserved_along_integration(sys2):
    traj = integrate_natural(sys2, np.array([0.5, 0.0]), np.array([0.0, 0.6]), 5.0)
    from brakeorbit.geometry import energy

    es = [energy(sys2, q, v) for q, v in zip(traj.positions, traj.velocities)]
    assert np.max(np.abs(np.diff(es))) <= 1e-8


def test_lifted_geodesic_is_unit_speed(sys1, orbit1):
    geo = geodesic_from_orbit(sys1, orbit1)
    assert geo.boundary_start
    assert geo.arc_length == pytest.approx(np.pi / 4.0, abs=1e-5)
    s = geo.s_grid
    interior = (s > 0.01) & (s < geo.arc_length - 0.01)
    q, gdot, u = geo.eval_many(s[interior])
    cons = 0.5 * u * np.einsum("pi,pi->p", gdot, gdot)
    assert np.max(np.abs(cons - 1.0)) <= 1e-6


def test_maupertuis_roundtrip(sys1, orbit1):
    geo = geodesic_from_orbit(sys1, orbit1)
    back = orbit_from_geodesic(sys1, geo)
    assert np.max(np.abs(back.positions[:, 0] - np.cos(back.times))) <= 1e-6


def test_time_of_arc_roundtrip(sys1, orbit1):
    geo = geodesic_from_orbit(sys1, orbit1)
    rmap = time_of_arc(sys1, geo, geo.conservation_constant)
    assert rmap.roundtrip_error() <= 1e-6
    # closed form for the crossing half-orbit: s(t) = (t - sin t cos t) / 4
    t = np.array([0.5, 1.0, 2.0])
    s_exact = (t - np.sin(t) * np.cos(t)) / 4.0
    assert np.allclose(rmap.sigma(t), s_exact, atol=1e-6)


def test_boundary_start_arc_truncates_past_rebrake(sys1):
    geo = boundary_start_arc(sys1, np.array([1.0]), 0.9)
    assert geo.truncated
    with pytest.raises(TruncationError):
        boundary_start_arc(sys1, np.array([1.0]), 0.9, strict=True)


def test_boundary_start_requires_boundary_point(sys1):
    with pytest.raises(ValueError):
        boundary_start_arc(sys1, np.array([0.5]), 0.1)


def test_rest_start_stays_braked_without_potential_gradient():
    from brakeorbit.geometry import make_system

    sysm = make_system(dim=2, potential="harmonic", energy=0.5)
    traj = integrate_natural(sysm, np.array([0.0, 0.0]), np.zeros(2), 1.0)
    assert np.allclose(traj.positions, 0.0, atol=1e-12)
