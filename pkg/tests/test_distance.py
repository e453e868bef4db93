"""Boundary-distance backends, gradient formula and fields."""

import numpy as np
import pytest

from brakeorbit.distance import (
    distance_field,
    grad_dV,
    minimize_shooting,
    minimize_variational,
)
from brakeorbit.geometry import make_system


def radial_distance(r):
    """d_V for the unit-boundary isotropic well at radius r: the arc of
    the crossing geodesic between radius r and the boundary."""
    t = np.arccos(r)
    return (t - np.sin(t) * np.cos(t)) / 4.0


def test_center_distance_both_backends_1d(sys1):
    q = np.array([0.0])
    rv = minimize_variational(sys1, q)
    rs = minimize_shooting(sys1, q)
    for res in (rv, rs):
        assert res.value == pytest.approx(np.pi / 8.0, abs=1e-4)
        assert not res.unique  # symmetric minimizers from both walls
    assert abs(rv.value - rs.value) <= 1e-4


def test_off_center_distance_1d(sys1):
    q = np.array([0.5])
    rv = minimize_variational(sys1, q)
    rs = minimize_shooting(sys1, q)
    exact = radial_distance(0.5)
    assert rv.value == pytest.approx(exact, abs=1e-4)
    assert rs.value == pytest.approx(exact, abs=1e-6)
    assert rv.unique and rs.unique


def test_boundary_point_distance_is_zero(sys1):
    res = minimize_variational(sys1, np.array([1.0]))
    assert res.value == 0.0 and res.unique


def test_radial_minimizer_2d(sys2):
    Q = np.array([0.5, 0.0])
    rs = minimize_shooting(sys2, Q)
    assert rs.value == pytest.approx(radial_distance(0.5), abs=1e-6)
    assert np.allclose(rs.minimizer.points[0], [1.0, 0.0], atol=1e-7)
    rv = minimize_variational(sys2, Q, n_start=2)
    assert abs(rv.value - rs.value) <= 1e-3 * (1.0 + rs.value)
    # launch point of the discrete minimizer is radial too
    assert np.allclose(rv.minimizer.points[0], [1.0, 0.0], atol=1e-2)


def test_minimizer_conservation(sys2):
    res = minimize_variational(sys2, np.array([0.3, 0.2]), n_start=1)
    assert res.minimizer.residuals["conservation"] <= 1e-5


def test_mesh_doubling_stability(sys1):
    q = np.array([0.0])
    d6 = minimize_variational(sys1, q, per_band=6).value
    d12 = minimize_variational(sys1, q, per_band=12).value
    assert abs(d6 - d12) <= 1e-4


def test_gradient_formula_radial(sys2):
    Q = np.array([0.5, 0.0])
    res = minimize_shooting(sys2, Q)
    g = grad_dV(sys2, Q, result=res)
    u = sys2.u(Q)
    assert np.allclose(g.grad_distance, [-np.sqrt(u / 2.0), 0.0], atol=1e-7)
    assert np.allclose(
        g.grad_squared, 2.0 * res.value * np.asarray(g.grad_distance), atol=1e-7
    )


def test_gradient_refused_when_non_unique(sys1):
    res = minimize_shooting(sys1, np.array([0.0]))
    g = grad_dV(sys1, np.array([0.0]), result=res)
    assert g.grad_distance is None and not g.unique
    assert "non-unique" in g.message


def test_double_well_center_non_unique():
    sysm = make_system(dim=1, potential="double_well", energy=1.5)
    center = np.array([0.0])
    rs = minimize_shooting(sysm, center)
    rv = minimize_variational(sysm, center)
    assert not rs.unique and not rv.unique
    assert abs(rs.value - rv.value) <= 1e-3 * (1.0 + rs.value)
    assert grad_dV(sysm, center, result=rs).grad_distance is None
    off = np.array([0.7])
    assert minimize_shooting(sysm, off).unique


def test_near_boundary_backend_agreement(sys1):
    # E - V(Q) = 0.01 -> Q just inside the right wall
    q = np.array([np.sqrt(2 * (sys1.energy - 0.01))])
    rv = minimize_variational(sys1, q)
    rs = minimize_shooting(sys1, q)
    assert abs(rv.value - rs.value) <= 1e-4


def test_minimizer_stability_under_query_perturbation(sys2):
    """Nearby queries with unique minimizers launch from nearby points."""
    Q = np.array([0.4, 0.3])
    base = minimize_shooting(sys2, Q, n_start=0)
    for delta in (1e-3, 1e-2):
        moved = minimize_shooting(sys2, Q + [delta, 0.0], n_start=0)
        assert np.linalg.norm(moved.minimizer.points[0] - base.minimizer.points[0]) \
            <= 10.0 * delta
        assert abs(moved.value - base.value) <= 10.0 * delta


def test_distance_field_radial_symmetry(sys2):
    cells = distance_field(sys2, (8, 8), n_start=2, with_grad=True)
    assert len(cells) == 64
    assert not any(c.error for c in cells)
    vals = {tuple(np.round(c.center, 9)): c.value for c in cells}
    for c in cells:
        if c.exterior:
            assert c.value == 0.0
            continue
        mirror = tuple(np.round([-c.center[0], c.center[1]], 9))
        assert abs(c.value - vals[mirror]) <= 1e-3
        if c.unique and c.grad is not None:
            # gradient points inward along the radius
            r = np.linalg.norm(c.center)
            assert np.allclose(
                c.grad, -np.sqrt(sys2.u(c.center) / 2.0) * c.center / r, atol=1e-6
            )


def test_distance_field_marks_double_well_axis():
    sysm = make_system(dim=1, potential="double_well", energy=1.5)
    cells = distance_field(sysm, (9,), n_start=2)
    mid = cells[4]  # symmetric grid puts a cell center at the axis
    assert abs(mid.center[0]) < 1e-12
    assert not mid.unique
    interior = [c for c in cells if not c.exterior and abs(c.center[0]) > 0.2]
    assert interior and all(c.unique for c in interior)
