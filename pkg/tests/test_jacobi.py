"""Interior geodesic integration and boundary-departure asymptotics."""

import numpy as np
import pytest

from brakeorbit.errors import HandoffError
from brakeorbit.jacobi import (
    asymptotic_exponents,
    integrate_interior,
    unit_speed_velocity,
)


def test_unit_speed_velocity_normalization(sys2):
    q = np.array([0.3, 0.2])
    v = unit_speed_velocity(sys2, q, np.array([1.0, 1.0]))
    u = sys2.u(q)
    assert 0.5 * u * float(v @ sys2.metric(q) @ v) == pytest.approx(1.0)


def test_interior_integration_matches_lift(sys2, geo2):
    """Arc-side integration from interior data retraces the lifted curve."""
    s0 = 0.2
    q, gdot, _ = geo2.eval_many(np.array([s0]))
    length = 0.3
    geo = integrate_interior(sys2, q[0], gdot[0], (0.0, length))
    s_probe = np.array([0.1, 0.2, 0.3])
    q_ref, _, _ = geo2.eval_many(s0 + s_probe)
    q_got, _, _ = geo.eval_many(s_probe)
    assert np.max(np.abs(q_got - q_ref)) <= 1e-7


def test_interior_integration_refuses_boundary_layer(sys2):
    q = np.array([0.9999, 0.0])  # u ~ 1e-4, inside the handoff margin
    v = unit_speed_velocity(sys2, q, np.array([-1.0, 0.0]))
    with pytest.raises(HandoffError):
        integrate_interior(sys2, q, v, (0.0, 0.5))


def test_departure_exponents_1d(sys1, geo1_full):
    fit = asymptotic_exponents(sys1, geo1_full)
    assert fit.alpha_well_depth == pytest.approx(2.0 / 3.0, abs=0.05)
    assert fit.alpha_speed == pytest.approx(-1.0 / 3.0, abs=0.05)
    assert np.isfinite(fit.sigma_bound_ratio)


def test_departure_exponents_2d(sys2, geo2):
    fit = asymptotic_exponents(sys2, geo2)
    assert fit.alpha_well_depth == pytest.approx(2.0 / 3.0, abs=0.05)
    assert fit.alpha_speed == pytest.approx(-1.0 / 3.0, abs=0.05)
