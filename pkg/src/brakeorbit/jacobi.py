"""Geodesics of the degenerate conformal metric (E - V) g.

Interior segments are integrated directly in arc parameter; starts on
the zero set of E - V are always lifted through the time
parameterization (see dynamics), because the arc-side equation has a
coefficient blowing up like s^(-2/3) there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .curves import JacobiGeodesic
from .dynamics import boundary_start_arc as boundary_start  # noqa: F401
from .errors import HandoffError, SamplingError, StiffnessError
from .geometry import PotentialSystem, christoffel_raw

Array = np.ndarray


def unit_speed_velocity(sys: PotentialSystem, q: Array, direction: Array) -> Array:
    """Scale a direction so that 0.5 (E - V) g(v, v) = 1 at q."""
    u = sys.u(q)
    if u <= 0.0:
        raise ValueError("q is not strictly inside the well")
    nrm = sys.g_norm(q, direction)
    if nrm == 0.0:
        raise ValueError("zero direction")
    return direction * np.sqrt(2.0 / u) / nrm


def integrate_interior(
    sys: PotentialSystem,
    q0: Array,
    v0: Array,
    s_span: tuple[float, float],
    n_out: int = 257,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> JacobiGeodesic:
    """Integrate the geodesic equation of (E - V) g in arc parameter.

    The second-order form is
        Dv/ds = [ g(gradV, v) v - 0.5 g(v, v) gradV ] / (E - V),
    valid strictly inside the well.  Approaching the boundary within the
    handoff margin aborts with instructions to use the time-side lift.
    """
    q0 = np.asarray(q0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    n = sys.dim
    margin = 1e-3 * sys.reg_band
    if sys.u(q0) <= margin:
        raise HandoffError(
            "start too close to the boundary for arc-parameter integration; "
            "use boundary_start (time-side lift)"
        )
    flat = sys.metric_is_flat
    c0 = 0.5 * sys.u(q0) * float(v0 @ sys.metric(q0) @ v0)

    def rhs(s, y):
        q = y[:n]
        v = y[n:]
        u = sys.energy - sys.potential(q)
        gv = sys.grad_potential(q)
        gmat = sys.metric(q)
        acc = (float(gv @ gmat @ v) * v - 0.5 * float(v @ gmat @ v) * gv) / u
        if not flat:
            acc = acc - np.einsum(
                "kij,i,j->k", christoffel_raw(sys.metric, q, n), v, v
            )
        return np.concatenate([v, acc])

    def near_boundary(s, y):
        return sys.energy - sys.potential(y[:n]) - margin

    near_boundary.terminal = True
    near_boundary.direction = -1.0

    sol = solve_ivp(
        rhs,
        s_span,
        np.concatenate([q0, v0]),
        method="DOP853",
        rtol=rtol,
        atol=atol,
        dense_output=True,
        events=[near_boundary],
    )
    if sol.status == -1:
        raise StiffnessError(f"geodesic integration failed: {sol.message}")
    if sol.t_events[0].size:
        raise HandoffError(
            f"geodesic reached the handoff margin at s={sol.t_events[0][0]:.6g}; "
            "continue via the time-side lift"
        )
    ss = np.linspace(s_span[0], s_span[1], n_out)
    ys = sol.sol(ss)
    qs = ys[:n].T
    vs = ys[n:].T
    us = np.array([sys.u(q) for q in qs])
    cons = 0.5 * us * np.einsum("ij,ij->i", vs, [sys.metric(q) @ v for q, v in zip(qs, vs)])
    residual = float(np.max(np.abs(cons - c0)))

    def evaluator(s_arr):
        s_arr = np.atleast_1d(np.asarray(s_arr, dtype=float))
        y = sol.sol(s_arr)
        q = y[:n].T
        v = y[n:].T
        u = sys.energy - np.array([sys.potential(qi) for qi in q])
        return q, v, u

    return JacobiGeodesic(
        s_grid=ss - ss[0],
        points=qs,
        velocities=vs,
        conservation_constant=c0,
        boundary_start=False,
        energy=sys.energy,
        residuals={"conservation": residual},
        evaluator=lambda s: evaluator(np.asarray(s) + ss[0]),
    )


@dataclass(frozen=True)
class AsymptoticFit:
    """Log-log exponents of a boundary-starting geodesic near s = 0."""

    alpha_well_depth: float
    alpha_speed: float
    sigma_bound_ratio: float
    s_fit: float
    n_nodes: int


def asymptotic_exponents(sys: PotentialSystem, geo: JacobiGeodesic) -> AsymptoticFit:
    """Fit the boundary-departure exponents of a boundary-starting geodesic.

    Returns the least-squares slopes of log(E - V) and log |gdot| against
    log s on (0, s_fit], s_fit = min(a/4, 0.1), plus the supremum of
    |gdot/|gdot| + gradV/|gradV|| / s^(1/3) over the same nodes.
    """
    if not geo.boundary_start:
        raise ValueError("asymptotic fit requires a boundary-starting geodesic")
    a = geo.arc_length
    s_fit = min(a / 4.0, 0.1)
    s = geo.s_grid
    sel = s[(s > 0.0) & (s <= s_fit)]
    if len(sel) < 20:
        raise SamplingError(
            f"only {len(sel)} nodes in (0, {s_fit:.3g}]; need at least 20"
        )
    q, gdot, u = geo.eval_many(sel)
    speed = np.array([sys.g_norm(qi, vi) for qi, vi in zip(q, gdot)])
    logs = np.log(sel)
    alpha_u = float(np.polyfit(logs, np.log(u), 1)[0])
    alpha_v = float(np.polyfit(logs, np.log(speed), 1)[0])
    ratios = []
    for qi, vi, sp, si in zip(q, gdot, speed, sel):
        gv = sys.grad_potential(qi)
        ng = sys.g_norm(qi, gv)
        sigma = vi / sp + gv / ng
        ratios.append(sys.g_norm(qi, sigma) / si ** (1.0 / 3.0))
    return AsymptoticFit(
        alpha_well_depth=alpha_u,
        alpha_speed=alpha_v,
        sigma_bound_ratio=float(np.max(ratios)),
        s_fit=s_fit,
        n_nodes=len(sel),
    )
