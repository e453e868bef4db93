"""Newton-system integration, brake-orbit shooting and the time/arc change.

The natural system D/dt qdot + grad V(q) = 0 is smooth everywhere, even
where the conformal metric (E - V) g degenerates, so every boundary start
is handled here in the time parameterization and only afterwards mapped
to arc parameter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import PchipInterpolator

from .curves import (
    TOL_E,
    TOL_V,
    BrakeOrbit,
    JacobiGeodesic,
    NaturalTrajectory,
    ReparamMap,
    double_graded_grid,
    graded_grid,
)
from .errors import (
    DegenerateCurveError,
    EscapeError,
    InvalidGeodesicError,
    NoBrakeError,
    StiffnessError,
    TruncationError,
)
from .geometry import PotentialSystem, christoffel_raw, energy

Array = np.ndarray

RTOL = 1e-10
ATOL = 1e-12
T_MIN = 1e-3
T_MAX = 100.0
TOL_PROJ = 1e-10

_GAUSS4_X, _GAUSS4_W = np.polynomial.legendre.leggauss(4)
_GAUSS8_X, _GAUSS8_W = np.polynomial.legendre.leggauss(8)


def _natural_rhs(sys: PotentialSystem, augmented: bool, sqrt_c: float = 1.0):
    """Right-hand side of (q, v[, s])' for the Newton system.

    The optional third block integrates ds/dt = (E - V)/sqrt(c), the arc
    parameter of the conformally rescaled metric.
    """
    n = sys.dim
    flat = sys.metric_is_flat

    def rhs(t, y):
        q = y[:n]
        v = y[n : 2 * n]
        acc = -sys.grad_potential(q)
        if not flat:
            gamma = christoffel_raw(sys.metric, q, n)
            acc = acc - np.einsum("kij,i,j->k", gamma, v, v)
        if augmented:
            return np.concatenate([v, acc, [(sys.energy - sys.potential(q)) / sqrt_c]])
        return np.concatenate([v, acc])

    return rhs


def _escape_event(sys: PotentialSystem):
    lo = sys.domain_box[:, 0]
    hi = sys.domain_box[:, 1]
    n = sys.dim

    def ev(t, y):
        q = y[:n]
        return float(min(np.min(q - lo), np.min(hi - q)))

    ev.terminal = True
    ev.direction = -1.0
    return ev


def _solve(sys, y0, t_span, rhs, events=None, rtol=RTOL, atol=ATOL, t_eval=None):
    sol = solve_ivp(
        rhs,
        t_span,
        y0,
        method="DOP853",
        rtol=rtol,
        atol=atol,
        dense_output=True,
        events=events,
        t_eval=t_eval,
    )
    if sol.status == -1:
        raise StiffnessError(f"integrator failed: {sol.message}")
    return sol


def integrate_natural(
    sys: PotentialSystem,
    q0: Array,
    v0: Array,
    t_end: float,
    n_out: int = 401,
    rtol: float = RTOL,
    atol: float = ATOL,
    energy_locked: bool = False,
    augmented: bool = False,
) -> NaturalTrajectory:
    """Integrate the Newton system from (q0, v0) over [0, t_end].

    With ``energy_locked`` the initial energy must match the system energy
    within tol_E.  With ``augmented`` the unit-speed arc parameter of the
    rescaled metric is carried as an extra state.
    """
    q0 = np.asarray(q0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    sys.require_in_box(q0)
    e0 = energy(sys, q0, v0)
    if energy_locked and abs(e0 - sys.energy) > TOL_E:
        raise ValueError(
            f"initial energy {e0} is not within {TOL_E} of E={sys.energy}"
        )
    y0 = np.concatenate([q0, v0, [0.0]] if augmented else [q0, v0])
    rhs = _natural_rhs(sys, augmented)
    esc = _escape_event(sys)
    sol = _solve(sys, y0, (0.0, t_end), rhs, events=[esc], rtol=rtol, atol=atol)
    if sol.t_events[0].size and sol.t[-1] < t_end:
        raise EscapeError(
            f"trajectory left the domain box at t={sol.t_events[0][0]:.6g}"
        )
    ts = np.linspace(0.0, t_end, n_out)
    ys = sol.sol(ts)
    n = sys.dim
    qs = ys[:n].T
    vs = ys[n : 2 * n].T
    res = max(abs(energy(sys, q, v) - e0) for q, v in zip(qs, vs))
    return NaturalTrajectory(
        times=ts,
        positions=qs,
        velocities=vs,
        energy_residual=float(res),
        energy=e0,
        dense=sol.sol,
        arc=ys[2 * n] if augmented else None,
    )


def shoot_brake_orbit(
    sys: PotentialSystem,
    x0: Array,
    t_max: float = T_MAX,
    t_min: float = T_MIN,
    rtol: float = RTOL,
    atol: float = ATOL,
    n_out: int = 401,
) -> BrakeOrbit:
    """Shoot from rest at the boundary point x0 until the orbit rebrakes.

    The rebrake is located as the first kinetic-energy minimum with
    ``t > t_min`` at which the speed vanishes to tolerance.  A minimum of
    K = 0.5 g(v, v) is a sign change - to + of dK/dt = -dV(q) . v.
    """
    x0 = np.asarray(x0, dtype=float)
    if abs(sys.potential(x0) - sys.energy) > TOL_PROJ:
        raise ValueError(f"x0 not on the energy boundary to {TOL_PROJ}")
    n = sys.dim
    rhs = _natural_rhs(sys, augmented=False)

    def kdot(t, y):
        return -float(sys.grad_partials(y[:n]) @ y[n:])

    kdot.terminal = False
    kdot.direction = 1.0
    esc = _escape_event(sys)
    y0 = np.concatenate([x0, np.zeros(n)])
    sol = _solve(sys, y0, (0.0, t_max), rhs, events=[kdot, esc], rtol=rtol, atol=atol)
    if sol.t_events[1].size:
        raise EscapeError("orbit left the domain box before rebraking")
    speed_scale = np.sqrt(2.0 * max(abs(sys.energy), 1.0))
    T = None
    for te in sol.t_events[0]:
        if te <= t_min:
            continue
        y = sol.sol(te)
        if sys.g_norm(y[:n], y[n:]) <= TOL_V * speed_scale:
            T = float(te)
            break
    if T is None:
        raise NoBrakeError(f"no rebrake event with speed <= {TOL_V} before t={t_max}")
    ts = np.linspace(0.0, T, n_out)
    ys = sol.sol(ts)
    qs = ys[:n].T
    vs = ys[n : 2 * n].T
    res = max(abs(energy(sys, q, v) - sys.energy) for q, v in zip(qs, vs))
    traj = NaturalTrajectory(
        times=ts,
        positions=qs,
        velocities=vs,
        energy_residual=float(res),
        energy=sys.energy,
        dense=sol.sol,
    )
    return BrakeOrbit(trajectory=traj, half_period=T)


@dataclass(frozen=True)
class OrthProfile:
    """Sampled ratio r(t) = |gradV/|gradV| + v/|v||_g / t along a brake start."""

    times: Array
    values: Array
    sup: float
    n_skipped: int


def orthcond_profile(
    sys: PotentialSystem,
    orbit: BrakeOrbit,
    n_samples: int = 200,
    t_probe: Optional[float] = None,
    t_taylor: float = 1e-4,
) -> OrthProfile:
    """Profile of the near-boundary alignment defect of a brake orbit.

    At a brake point the velocity leaves along -grad V; r(t) measures how
    fast the unit velocity separates from -grad V/|grad V|, normalized
    by t.  Below ``t_taylor`` the velocity is replaced by its leading
    Taylor form v(t) = -t grad V(q(0)).
    """
    traj = orbit.trajectory
    if t_probe is None:
        t_probe = orbit.half_period / 2.0
    ts = np.geomspace(t_probe * 1e-6, t_probe, n_samples)
    g0 = sys.grad_potential(traj.positions[0])
    vals = []
    kept = []
    skipped = 0
    floor = 1e3 * np.finfo(float).eps * np.sqrt(2.0 * max(abs(sys.energy), 1.0))
    for t in ts:
        q, v = traj.state(t)
        if t < t_taylor:
            v = -t * g0
        nv = sys.g_norm(q, v)
        if nv < floor:
            skipped += 1
            continue
        gv = sys.grad_potential(q)
        ng = sys.g_norm(q, gv)
        sigma = gv / ng + v / nv
        vals.append(sys.g_norm(q, sigma) / t)
        kept.append(t)
    return OrthProfile(
        times=np.asarray(kept),
        values=np.asarray(vals),
        sup=float(np.max(vals)) if vals else 0.0,
        n_skipped=skipped,
    )


def _cell_time(sys, geo, c, s_l, s_r, cube_sub, mirror_at=None):
    """Integral of sqrt(c)/(E - V) over one arc cell of the geodesic."""
    if cube_sub:
        # substitute s = w^3 (or a - s = w^3 near a degenerate far end):
        # the integrand sqrt(c)/u * 3 w^2 is smooth when u vanishes like
        # the 2/3 power of the distance to the endpoint
        if mirror_at is None:
            wl, wr = np.cbrt(s_l), np.cbrt(s_r)
        else:
            wl, wr = np.cbrt(mirror_at - s_r), np.cbrt(mirror_at - s_l)
        w = 0.5 * (wr - wl) * _GAUSS4_X + 0.5 * (wr + wl)
        jac = 0.5 * (wr - wl) * 3.0 * w**2 * _GAUSS4_W
        s_pts = w**3 if mirror_at is None else mirror_at - w**3
    else:
        s_pts = 0.5 * (s_r - s_l) * _GAUSS8_X + 0.5 * (s_r + s_l)
        jac = 0.5 * (s_r - s_l) * _GAUSS8_W
    _, _, u = geo.eval_many(s_pts)
    if np.any(u <= 0.0) or not np.all(np.isfinite(u)):
        raise InvalidGeodesicError("E - V not positive inside an arc cell")
    return float(np.sum(jac * np.sqrt(c) / u))


def time_of_arc(sys: PotentialSystem, geo: JacobiGeodesic, c: float) -> ReparamMap:
    """Time change t(s) of a geodesic with conservation constant c.

    Integrates sqrt(c)/(E - V) cell by cell on the geodesic's own grid; on
    cells near a degenerate start the cube-root substitution absorbs the
    s^(2/3) vanishing of E - V exactly.
    """
    if c <= 0.0:
        raise ValueError("conservation constant must be positive")
    s = geo.s_grid
    a = geo.arc_length
    _, _, u_nodes = geo.eval_many(s[1:-1] if len(s) > 2 else s[1:])
    if np.any(u_nodes <= 0.0):
        raise InvalidGeodesicError("geodesic touches the boundary at an interior node")
    # a degenerate far end (rebrake point) gets the mirrored treatment
    probe = geo.eval_many(np.array([a - 1e-9 * a]))[2][0]
    end_singular = probe < 1e-4 * max(abs(sys.energy), 1.0)
    t_nodes = np.zeros(len(s))
    for j in range(len(s) - 1):
        if geo.boundary_start and s[j] < 0.1 * a:
            dt = _cell_time(sys, geo, c, s[j], s[j + 1], True)
        elif end_singular and a - s[j + 1] < 0.1 * a:
            dt = _cell_time(sys, geo, c, s[j], s[j + 1], True, mirror_at=a)
        else:
            dt = _cell_time(sys, geo, c, s[j], s[j + 1], False)
        t_nodes[j + 1] = t_nodes[j] + dt
    return ReparamMap(s_nodes=s.copy(), t_nodes=t_nodes, constant=c)


def geodesic_from_orbit(
    sys: PotentialSystem,
    orbit: BrakeOrbit,
    per_band: int = 8,
    n_uniform: int = 257,
) -> JacobiGeodesic:
    """Unit-speed geodesic of the rescaled metric traced by a brake orbit.

    Re-integrates the orbit with the arc parameter s(t) carried along
    (ds/dt = E - V for unit speed), then inverts s(t) on a grid graded
    toward the degenerate start.
    """
    traj = orbit.trajectory
    return _lift_trajectory(
        sys,
        traj.positions[0],
        traj.velocities[0],
        orbit.half_period,
        per_band=per_band,
        n_uniform=n_uniform,
    )


def _lift_trajectory(
    sys: PotentialSystem,
    q0: Array,
    v0: Array,
    t_end: float,
    per_band: int = 8,
    n_uniform: int = 257,
    arc_target: Optional[float] = None,
) -> JacobiGeodesic:
    """Build the unit-speed arc parameterization of a Newton trajectory.

    If ``arc_target`` is given, stop once s reaches it (truncating at
    ``t_end`` with a flag if the arc is not available).
    """
    n = sys.dim
    q0 = np.asarray(q0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    speed_scale = np.sqrt(2.0 * max(abs(sys.energy), 1.0))
    if sys.g_norm(q0, v0) <= TOL_V * speed_scale and abs(sys.u(q0)) <= TOL_PROJ * 10:
        boundary = True
    else:
        boundary = False
    if t_end <= 0.0:
        raise DegenerateCurveError("zero-length trajectory")
    rhs = _natural_rhs(sys, augmented=True)
    events = [_escape_event(sys)]
    if arc_target is not None:

        def hit(t, y):
            return y[2 * n] - arc_target

        hit.terminal = True
        hit.direction = 1.0
        events.append(hit)
    y0 = np.concatenate([q0, v0, [0.0]])
    sol = _solve(sys, y0, (0.0, t_end), rhs, events=events)
    if sol.t_events[0].size and (arc_target is None or not sol.t_events[1].size):
        raise EscapeError("trajectory left the domain box during the lift")
    truncated = False
    if arc_target is not None:
        if sol.t_events[1].size:
            t_stop = float(sol.t_events[1][0])
            a = arc_target
        else:
            t_stop = float(sol.t[-1])
            a = float(sol.sol(t_stop)[2 * n])
            truncated = True
    else:
        t_stop = t_end
        a = float(sol.sol(t_stop)[2 * n])
    if a <= 0.0:
        raise DegenerateCurveError("trajectory sweeps zero arc length")

    # monotone interpolant of t(s) from a fine sample of the dense output,
    # refined by Newton using ds/dt = E - V
    tf = np.linspace(0.0, t_stop, 4001)
    sf = sol.sol(tf)[2 * n]
    sf, idx = np.unique(sf, return_index=True)
    tf = tf[idx]
    t_of_s = PchipInterpolator(sf, tf)

    # near a degenerate end the inversion of s(t) is ill-conditioned; seed
    # Newton there with the local model s ~ |gradV|^2 t^3 / 6 of a brake point
    g2_start = None
    if boundary:
        gv0 = sys.grad_potential(q0)
        g2_start = float(gv0 @ sys.metric(q0) @ gv0)
    q_end = sol.sol(t_stop)[:n]
    u_end_probe = sys.energy - sys.potential(q_end)
    g2_end = None
    if u_end_probe < 1e-4 * max(abs(sys.energy), 1.0):
        gve = sys.grad_potential(q_end)
        g2_end = float(gve @ sys.metric(q_end) @ gve)

    def t_at(s_arr):
        t = np.clip(t_of_s(s_arr), 0.0, t_stop)
        if g2_start is not None:
            near = s_arr < 1e-4 * a
            t[near] = np.cbrt(6.0 * s_arr[near] / g2_start)
        if g2_end is not None:
            near = a - s_arr < 1e-4 * a
            t[near] = t_stop - np.cbrt(6.0 * (a - s_arr[near]) / g2_end)
        for _ in range(6):
            y = sol.sol(t)
            s_cur = y[2 * n]
            u = sys.energy - np.array([sys.potential(q) for q in y[:n].T])
            step = np.where(u > 1e-300, (s_cur - s_arr) / np.maximum(u, 1e-300), 0.0)
            t = np.clip(t - step, 0.0, t_stop)
        return t

    def evaluator(s_arr):
        s_arr = np.atleast_1d(np.asarray(s_arr, dtype=float))
        t = t_at(s_arr)
        y = sol.sol(t)
        q = y[:n].T
        v = y[n : 2 * n].T
        u = sys.energy - np.array([sys.potential(qi) for qi in q])
        with np.errstate(divide="ignore", invalid="ignore"):
            gdot = v / u[:, None]
        return q, gdot, u

    y_end = sol.sol(t_stop)
    u_end = sys.energy - sys.potential(y_end[:n])
    end_singular = u_end < 1e-4 * max(abs(sys.energy), 1.0)
    if boundary and end_singular:
        s_grid = double_graded_grid(a, per_band=per_band)
    elif boundary:
        s_grid = graded_grid(a, per_band=per_band)
    else:
        s_grid = np.linspace(0.0, a, n_uniform)
    q_nodes, gd_nodes, u_nodes = evaluator(s_grid)
    q_nodes = q_nodes.copy()
    gd_nodes = gd_nodes.copy()
    q_nodes[0] = q0
    if boundary:
        gd_nodes[0] = np.nan
    if end_singular:
        gd_nodes[-1] = np.nan
    cons = np.array(
        [
            0.5 * u_nodes[i] * float(gd_nodes[i] @ sys.metric(q_nodes[i]) @ gd_nodes[i])
            for i in range(1, len(s_grid) - 1)
        ]
    )
    residual = float(np.max(np.abs(cons - 1.0))) if len(cons) else 0.0
    return JacobiGeodesic(
        s_grid=s_grid,
        points=q_nodes,
        velocities=gd_nodes,
        conservation_constant=1.0,
        boundary_start=boundary,
        energy=sys.energy,
        residuals={
            "conservation": residual,
            "time_span": t_stop,
            "end_well_depth": float(u_end),
        },
        truncated=truncated,
        evaluator=evaluator,
    )


def orbit_from_geodesic(
    sys: PotentialSystem, geo: JacobiGeodesic, n_out: int = 401
) -> NaturalTrajectory:
    """Newton trajectory traced by a geodesic of the rescaled metric.

    The time span is recovered from the time change t(s); the initial
    state comes from the geodesic start (rest state if it starts on the
    boundary, otherwise velocity (E - V) gdot / sqrt(c)).
    """
    if geo.arc_length <= 0.0 or np.allclose(
        geo.points, geo.points[0], atol=1e-14
    ):
        raise DegenerateCurveError("constant geodesic has no trajectory")
    rmap = time_of_arc(sys, geo, geo.conservation_constant)
    t_end = float(rmap.t_nodes[-1])
    q0 = geo.points[0]
    if geo.boundary_start:
        v0 = np.zeros(sys.dim)
    else:
        u0 = sys.u(q0)
        v0 = geo.velocities[0] * u0 / np.sqrt(geo.conservation_constant)
    return integrate_natural(sys, q0, v0, t_end, n_out=n_out)


def boundary_start_arc(
    sys: PotentialSystem,
    x0: Array,
    a: float,
    t_cap: float = T_MAX,
    per_band: int = 8,
    strict: bool = False,
) -> JacobiGeodesic:
    """Unit-speed geodesic of arc length a leaving the boundary point x0.

    Lifted through the time parameterization (the arc-side equation is
    singular at s = 0).  If the orbit rebrakes before sweeping arc a the
    result is truncated and flagged, or raises when ``strict``.
    """
    x0 = np.asarray(x0, dtype=float)
    if abs(sys.potential(x0) - sys.energy) > TOL_PROJ:
        raise ValueError(f"x0 not on the energy boundary to {TOL_PROJ}")
    if a <= 0.0:
        return JacobiGeodesic(
            s_grid=np.array([0.0]),
            points=x0[None, :].copy(),
            velocities=np.full((1, sys.dim), np.nan),
            conservation_constant=1.0,
            boundary_start=True,
            energy=sys.energy,
        )
    try:
        orbit = shoot_brake_orbit(sys, x0, t_max=t_cap)
        t_end = orbit.half_period
    except NoBrakeError:
        t_end = t_cap
    geo = _lift_trajectory(
        sys, x0, np.zeros(sys.dim), t_end, per_band=per_band, arc_target=a
    )
    if geo.truncated and strict:
        raise TruncationError(
            f"only arc {geo.arc_length:.6g} available before rebrake (wanted {a:.6g})"
        )
    return geo
