"""Acceptance gate: the eleven end-to-end criteria.

Each test covers one numbered criterion and prints a single pass/fail
line (visible with ``pytest -s``/``-v``); the assertions carry the
stated tolerances.
"""

import filecmp
import json

import numpy as np
import pytest

from brakeorbit.distance import grad_dV, minimize_shooting, minimize_variational
from brakeorbit.dynamics import geodesic_from_orbit, orbit_from_geodesic
from brakeorbit.jacobi import asymptotic_exponents
from brakeorbit.morse import (
    assemble_index_form,
    broken_jacobi_index,
    find_positivity_threshold,
    jacobi_field_shoot,
    null_boundary_check,
    pair_field_with_basis,
)

S_STAR = np.pi / 8.0


def report(n, ok, detail):
    print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


def test_criterion_01_brake_orbit_half_period(orbit1):
    t = orbit1.trajectory.times
    sup = float(np.max(np.abs(orbit1.trajectory.positions[:, 0] - np.cos(t))))
    err_T = abs(orbit1.half_period - np.pi)
    report(1, err_T <= 1e-6 and sup <= 1e-6, f"|T-pi|={err_T:.2e} sup={sup:.2e}")


def test_criterion_02_maupertuis_roundtrip(sys1, orbit1):
    geo = geodesic_from_orbit(sys1, orbit1)
    back = orbit_from_geodesic(sys1, geo)
    sup = float(np.max(np.abs(back.positions[:, 0] - np.cos(back.times))))
    err_a = abs(geo.arc_length - np.pi / 4.0)
    report(2, sup <= 1e-6 and err_a <= 1e-5, f"sup={sup:.2e} |a-pi/4|={err_a:.2e}")


def test_criterion_03_boundary_asymptotics(sys1, sys2, geo1_full, geo2, orbit1):
    from brakeorbit.dynamics import boundary_start_arc

    fits = [asymptotic_exponents(sys1, geo1_full), asymptotic_exponents(sys2, geo2)]
    ok = all(
        abs(f.alpha_well_depth - 2.0 / 3.0) <= 0.05
        and abs(f.alpha_speed + 1.0 / 3.0) <= 0.05
        for f in fits
    )
    geo2_fine = boundary_start_arc(sys2, np.array([1.0, 0.0]), geo2.arc_length,
                                   per_band=16)
    r_coarse = fits[1].sigma_bound_ratio
    r_fine = asymptotic_exponents(sys2, geo2_fine).sigma_bound_ratio
    stable = np.isfinite(r_coarse) and abs(r_fine - r_coarse) <= 0.1 * abs(r_coarse)
    report(
        3,
        ok and stable,
        f"exponents={[(round(f.alpha_well_depth, 3), round(f.alpha_speed, 3)) for f in fits]} "
        f"sigma_ratio {r_coarse:.3f}->{r_fine:.3f}",
    )


def test_criterion_04_center_distance_both_backends(sys1):
    q = np.array([0.0])
    dv = minimize_variational(sys1, q).value
    ds = minimize_shooting(sys1, q).value
    ev, es, dd = abs(dv - S_STAR), abs(ds - S_STAR), abs(dv - ds)
    report(
        4,
        ev <= 1e-4 and es <= 1e-4 and dd <= 1e-4,
        f"var err={ev:.2e} shoot err={es:.2e} disagree={dd:.2e}",
    )


def test_criterion_05_gradient_formula(sys2):
    rng = np.random.default_rng(2024)
    worst = 0.0
    checked = 0
    while checked < 20:
        Q = rng.uniform(-0.85, 0.85, 2)
        if not 0.05 < np.linalg.norm(Q) < 0.85:
            continue
        res = minimize_shooting(sys2, Q, n_start=0)
        if not res.unique:
            continue
        g = grad_dV(sys2, Q, result=res).grad_distance
        h = 1e-4
        fd = np.empty(2)
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            fd[k] = (
                minimize_shooting(sys2, Q + e, n_start=0).value
                - minimize_shooting(sys2, Q - e, n_start=0).value
            ) / (2 * h)
        worst = max(worst, float(np.linalg.norm(g - fd) / np.linalg.norm(fd)))
        checked += 1
    report(5, worst <= 1e-3, f"20 points, worst rel err={worst:.2e}")


def test_criterion_06_null_field_checks(sys1, geo1_full):
    a = geo1_full.arc_length
    s_min = 1e-4 * a

    def xi(s):
        _, _, u = geo1_full.eval_many(np.atleast_1d(s))
        return np.sqrt(np.maximum(u, 0.0))[:, None]

    def dxi(s):
        q, gdot, u = geo1_full.eval_many(np.atleast_1d(s))
        du = -np.einsum("pi,pi->p", sys1.grad_partials_many(q), gdot)
        return (du / (2.0 * np.sqrt(np.maximum(u, 1e-300))))[:, None]

    sol = jacobi_field_shoot(
        sys1, geo1_full, s_min, xi(s_min)[0], dxi(s_min)[0], a - s_min
    )
    bnd = null_boundary_check(sys1, geo1_full, sol)
    ratios = []
    for pb in (24, 48):
        disc = assemble_index_form(sys1, geo1_full, a, per_band=pb)
        b, norms = pair_field_with_basis(sys1, geo1_full, xi, dxi, disc)
        ratios.append(float(np.max(np.abs(b) / norms)))
    ok = (
        sol.residual <= 1e-5
        and bnd.value <= 1e-4
        and ratios[0] <= 5e-3
        and ratios[1] <= 5e-3
        and ratios[1] < ratios[0]
    )
    report(
        6,
        ok,
        f"jacobi res={sol.residual:.2e} boundary={bnd.value:.2e} "
        f"pairing {ratios[0]:.2e}->{ratios[1]:.2e}",
    )


def test_criterion_07_small_interval_positivity(
    sys1, sys2, sys3, sys_aniso, geo1_full, geo2, geo3, geo_aniso
):
    cases = [
        (sys1, geo1_full),
        (sys2, geo2),
        (sys3, geo3),
        (sys_aniso, geo_aniso),
    ]
    hats = [
        find_positivity_threshold(s, g, g.arc_length) for s, g in cases
    ]
    report(7, all(h > 0.0 for h in hats), f"s_hat={[round(h, 4) for h in hats]}")


def test_criterion_08_morse_index_theorem(mit2, mit3, mit_aniso):
    ok2 = (
        mit2.index == 1
        and mit2.mit_consistent is True
        and len(mit2.conjugate_points) == 1
        and mit2.conjugate_points[0].multiplicity == 1
        and abs(mit2.conjugate_points[0].s - S_STAR) <= 1e-3
    )
    ok3 = (
        mit3.index == 2
        and mit3.mit_consistent is True
        and len(mit3.conjugate_points) == 1
        and mit3.conjugate_points[0].multiplicity == 2
    )
    oka = (
        mit_aniso.mit_consistent is True
        and mit_aniso.index
        == sum(p.multiplicity for p in mit_aniso.conjugate_points)
        and all(p.multiplicity == p.nullity_at_jump for p in mit_aniso.conjugate_points)
    )
    report(
        8,
        ok2 and ok3 and oka,
        f"2d index={mit2.index} s*={mit2.conjugate_points[0].s:.5f}; "
        f"3d index={mit3.index} mult={mit3.conjugate_points[0].multiplicity}; "
        f"aniso index={mit_aniso.index}",
    )


def test_criterion_09_staircase_monotonicity(mit2, mit3, mit_aniso):
    ok = True
    for rep in (mit2, mit3, mit_aniso):
        idx = [i for (_, i, _) in rep.staircase]
        ok &= all(b >= a for a, b in zip(idx, idx[1:]))
        ok &= all(p.multiplicity == p.nullity_at_jump and p.consistent
                  for p in rep.conjugate_points)
    report(9, ok, "staircases nondecreasing, jumps equal nullities")


def test_criterion_10_broken_backend_agreement(
    sys2, sys3, sys_aniso, geo2, geo3, geo_aniso, mit2, mit3, mit_aniso
):
    pairs = []
    for sysm, geo, rep in (
        (sys2, geo2, mit2),
        (sys3, geo3, mit3),
        (sys_aniso, geo_aniso, mit_aniso),
    ):
        idx, nul = broken_jacobi_index(sysm, geo, rep.a)
        pairs.append((idx, nul, rep.index, rep.nullity))
    ok = all(i == ri and n == rn for (i, n, ri, rn) in pairs)
    report(10, ok, f"(broken, eigencount) = {pairs}")


def test_criterion_11_verify_determinism(tmp_path):
    from brakeorbit.cli import run

    codes = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        codes.append(run(["verify", "--seed", "0", "--out-dir", str(out)]))
    same_json = filecmp.cmp(
        tmp_path / "a" / "verify.json", tmp_path / "b" / "verify.json", shallow=False
    )
    same_csv = filecmp.cmp(
        tmp_path / "a" / "verify_staircase.csv",
        tmp_path / "b" / "verify_staircase.csv",
        shallow=False,
    )
    passed = json.loads((tmp_path / "a" / "verify.json").read_text())["all_passed"]
    ok = codes == [0, 0] and same_json and same_csv and passed
    report(
        11,
        ok,
        f"exit codes={codes}, bitwise identical json={same_json} csv={same_csv}",
    )
