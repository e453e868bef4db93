"""Index form, Jacobi fields, conjugate points and the index theorem."""

import numpy as np
import pytest

from brakeorbit.morse import (
    assemble_index_form,
    broken_jacobi_index,
    find_positivity_threshold,
    hessian_quadratic,
    jacobi_field_shoot,
    morse_index,
    null_boundary_check,
    pair_field_with_basis,
)

S_STAR = np.pi / 8.0
S_ANISO_1 = (np.pi - 2.0) / 16.0
S_ANISO_2 = (3.0 * np.pi + 2.0) / 16.0


def crossing_field(sys, geo):
    """The analytic candidate null field sqrt(E - V) and its s-derivative."""

    def xi(s):
        _, _, u = geo.eval_many(np.atleast_1d(s))
        return np.sqrt(np.maximum(u, 0.0))[:, None]

    def dxi(s):
        q, gdot, u = geo.eval_many(np.atleast_1d(s))
        du = -np.einsum("pi,pi->p", sys.grad_partials_many(q), gdot)
        return (du / (2.0 * np.sqrt(np.maximum(u, 1e-300))))[:, None]

    return xi, dxi


def test_discretization_shape_and_definiteness(sys2, geo2):
    disc = assemble_index_form(sys2, geo2, 0.5)
    assert np.allclose(disc.A, disc.A.T)
    assert np.allclose(disc.B, disc.B.T)
    assert np.all(np.linalg.eigvalsh(disc.B) > 0.0)
    # boundary-tangent constraint: the node-0 block is g-orthogonal to gradV
    dv = sys2.grad_partials(geo2.points[0])
    assert np.allclose(disc.tangent_basis.T @ dv, 0.0, atol=1e-10)


def test_small_interval_positive(sys2, geo2):
    disc = assemble_index_form(sys2, geo2, 0.1)
    mc = morse_index(disc)
    assert mc.index == 0 and mc.nullity == 0


def test_positivity_threshold_brackets_first_conjugate_point(sys2, geo2):
    s_hat = find_positivity_threshold(sys2, geo2, 0.9 * np.pi / 4.0)
    assert 0.0 < s_hat < S_STAR + 1e-2
    assert s_hat > 0.9 * S_STAR


def test_mit_isotropic_2d(mit2):
    assert mit2.index == 1 and mit2.nullity == 0
    assert mit2.mit_consistent is True
    assert len(mit2.conjugate_points) == 1
    p = mit2.conjugate_points[0]
    assert p.s == pytest.approx(S_STAR, abs=1e-3)
    assert p.multiplicity == 1


def test_mit_isotropic_3d(mit3):
    assert mit3.index == 2
    assert mit3.mit_consistent is True
    assert len(mit3.conjugate_points) == 1
    assert mit3.conjugate_points[0].multiplicity == 2
    assert mit3.conjugate_points[0].s == pytest.approx(S_STAR, abs=1e-3)


def test_mit_anisotropic(mit_aniso):
    assert mit_aniso.mit_consistent is True
    assert mit_aniso.index == 2
    ss = sorted(p.s for p in mit_aniso.conjugate_points)
    assert len(ss) == 2
    assert ss[0] == pytest.approx(S_ANISO_1, abs=1e-3)
    assert ss[1] == pytest.approx(S_ANISO_2, abs=1e-3)


@pytest.mark.parametrize("report", ["mit2", "mit3", "mit_aniso"])
def test_staircase_monotone_with_nullity_jumps(report, request):
    rep = request.getfixturevalue(report)
    idx = [i for (_, i, _) in rep.staircase]
    assert all(b >= a for a, b in zip(idx, idx[1:]))
    for p in rep.conjugate_points:
        assert p.multiplicity == p.nullity_at_jump
        assert p.consistent


def test_jacobi_equation_residual_of_crossing_field(sys1, geo1_full):
    a = geo1_full.arc_length
    s_min = 1e-4 * a
    xi, dxi = crossing_field(sys1, geo1_full)
    sol = jacobi_field_shoot(
        sys1, geo1_full, s_min, xi(s_min)[0], dxi(s_min)[0], a - s_min
    )
    assert sol.residual <= 1e-5


def test_degenerate_boundary_condition_of_crossing_field(sys1, geo1_full):
    a = geo1_full.arc_length
    s_min = 1e-4 * a
    xi, dxi = crossing_field(sys1, geo1_full)
    sol = jacobi_field_shoot(
        sys1, geo1_full, s_min, xi(s_min)[0], dxi(s_min)[0], a - s_min
    )
    res = null_boundary_check(sys1, geo1_full, sol)
    assert res.value <= 1e-4


def test_crossing_field_pairing_small_and_decreasing(sys1, geo1_full):
    xi, dxi = crossing_field(sys1, geo1_full)
    a = geo1_full.arc_length
    ratios = []
    for pb in (24, 48):
        disc = assemble_index_form(sys1, geo1_full, a, per_band=pb)
        b, norms = pair_field_with_basis(sys1, geo1_full, xi, dxi, disc)
        ratios.append(float(np.max(np.abs(b) / norms)))
    assert ratios[0] <= 5e-3
    assert ratios[1] <= 5e-3
    assert ratios[1] < ratios[0]


def test_quadrature_matches_discrete_form(sys2, geo2):
    """Direct quadrature of I(xi, xi) agrees with the assembled matrix on
    a smooth polynomial test field."""
    s_end = 0.5

    def xi(s):
        s = np.atleast_1d(s)
        val = s * (s_end - s)
        return np.stack([np.zeros_like(s), val], axis=-1)

    def dxi(s):
        s = np.atleast_1d(s)
        return np.stack([np.zeros_like(s), s_end - 2.0 * s], axis=-1)

    direct = hessian_quadratic(sys2, geo2, xi, dxi, s_end=s_end, per_band=16)
    disc = assemble_index_form(sys2, geo2, s_end, per_band=16)
    nodes = disc.mesh[:-1]
    vals = xi(nodes)
    C0 = disc.tangent_basis
    x = np.concatenate([C0.T @ vals[0], vals[1:].ravel()])
    nodal = float(x @ disc.A @ x)
    assert nodal == pytest.approx(direct, rel=2e-3, abs=2e-3)


def test_broken_backend_agrees_2d(sys2, geo2, mit2):
    a = 0.9 * np.pi / 4.0
    idx, nul = broken_jacobi_index(sys2, geo2, a)
    assert idx == mit2.index
    assert nul == mit2.nullity
