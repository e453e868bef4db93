"""Singular index form, Jacobi fields, conjugate points and Morse index.

The second variation of the conformal energy along a boundary-starting
geodesic is discretized with piecewise-linear vector fields on a mesh
graded toward the degenerate start, where the weights behave like
s^(2/3) and s^(-2/3).  The index and nullity come from the generalized
eigenproblem A u = lambda B u; an independent backend reduces to broken
(piecewise-discrete-Jacobi) fields by static condensation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import cho_factor, eigh, ldl, null_space

from .curves import JacobiGeodesic, double_graded_grid, graded_grid
from .errors import QuadratureError, StiffnessError, UsageError
from .geometry import PotentialSystem, christoffel_raw, curvature_form

Array = np.ndarray

TOL_S = 1e-4
TOL_ORTH = 1e-6
TOL_JAC = 1e-5
S_MIN_FRAC = 1e-4

_GX, _GW = np.polynomial.legendre.leggauss(4)


# ---------------------------------------------------------------------------
# Pointwise geometric data and quadrature layout
# ---------------------------------------------------------------------------


def _end_degenerate(sys: PotentialSystem, geo: JacobiGeodesic, s_end: float) -> bool:
    """True when the well depth vanishes at s_end (a far brake point)."""
    _, _, u_probe = geo.eval_many(np.array([s_end * (1.0 - 1e-9)]))
    scale = max(1.0, abs(sys.energy))
    return bool(np.isfinite(u_probe[0]) and u_probe[0] < 1e-4 * scale)


def _pointwise_data(sys: PotentialSystem, q: Array, gdot: Array, u: Array):
    P, N = q.shape
    gmat = np.array([sys.metric(qi) for qi in q])
    dv = np.array([sys.grad_partials(qi) for qi in q])
    hess = np.array([sys.hess_potential(qi) for qi in q])
    ggdot = np.einsum("pij,pj->pi", gmat, gdot)
    gvv = np.einsum("pi,pi->p", gdot, ggdot)
    if sys.metric_is_flat:
        gammav = np.zeros((P, N, N))
        riem = np.zeros((P, N, N))
    else:
        gammav = np.array(
            [
                np.einsum("kij,i->kj", christoffel_raw(sys.metric, qi, N), vi)
                for qi, vi in zip(q, gdot)
            ]
        )
        riem = np.array([curvature_form(sys, qi, vi) for qi, vi in zip(q, gdot)])
    return gmat, gammav, riem, dv, ggdot, gvv


def _quadrature_layout(
    mesh: Array, s_end: float, singular_start: bool, singular_end: bool = False
):
    """Per-cell Gauss points with the cube-root substitution near s=0.

    On cells in the first decade of a singular start the substitution
    s = w^3 turns the s^(+-2/3) weight powers into smooth integrands; a
    degenerate far end gets the mirrored substitution.
    """
    s_pts, wts, phi, dphi = [], [], [], []
    for sl, sr in zip(mesh[:-1], mesh[1:]):
        h = sr - sl
        if singular_start and sl < 0.1 * s_end:
            wl, wr = np.cbrt(sl), np.cbrt(sr)
            wloc = 0.5 * (wr - wl) * _GX + 0.5 * (wr + wl)
            s_loc = wloc**3
            jac = 0.5 * (wr - wl) * 3.0 * wloc**2 * _GW
        elif singular_end and s_end - sr < 0.1 * s_end:
            wl, wr = np.cbrt(s_end - sr), np.cbrt(s_end - sl)
            wloc = 0.5 * (wr - wl) * _GX + 0.5 * (wr + wl)
            s_loc = s_end - wloc**3
            jac = 0.5 * (wr - wl) * 3.0 * wloc**2 * _GW
        else:
            s_loc = 0.5 * h * _GX + 0.5 * (sr + sl)
            jac = 0.5 * h * _GW
        s_pts.append(s_loc)
        wts.append(jac)
        phi.append(np.column_stack([(sr - s_loc) / h, (s_loc - sl) / h]))
        dphi.append(np.tile([-1.0 / h, 1.0 / h], (len(s_loc), 1)))
    return (
        np.concatenate(s_pts),
        np.concatenate(wts),
        np.vstack(phi),
        np.vstack(dphi),
        len(_GX),
    )


# ---------------------------------------------------------------------------
# Index-form discretization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IndexFormDiscretization:
    """PL discretization of the index form on [0, s_end] along a geodesic.

    A discretizes the index form, B the weighted derivative norm, over a
    basis with the end node clamped and the start node restricted to the
    tangent hyperplane of the boundary.
    """

    geodesic: JacobiGeodesic
    s_end: float
    mesh: Array
    A: Array
    B: Array
    tangent_basis: Array  # (N, N-1) at the boundary start
    quadrature: dict = field(default_factory=dict)

    @property
    def n_dof(self) -> int:
        return self.A.shape[0]


def _tangent_basis(sys: PotentialSystem, q0: Array) -> Array:
    dv = sys.grad_partials(q0)
    return null_space(dv[None, :])


def assemble_index_form(
    sys: PotentialSystem,
    geo: JacobiGeodesic,
    s_end: float,
    per_band: int = 12,
    mesh: Optional[Array] = None,
) -> IndexFormDiscretization:
    """Assemble stiffness/Gram matrices of the index form on [0, s_end].

    The geodesic must start on the boundary with unit speed; the mesh
    must be graded at 0 (first cell at most 1e-4 of the interval) so the
    singular weights are resolved.
    """
    from . import _kernels

    if not geo.boundary_start:
        raise UsageError("index form requires a boundary-starting geodesic")
    if s_end <= 0.0 or s_end > geo.arc_length * (1.0 + 1e-12):
        raise UsageError("s_end outside the geodesic's arc range")
    if abs(geo.conservation_constant - 1.0) > 1e-6:
        raise UsageError("geodesic must be in unit-speed parameterization")
    singular_end = _end_degenerate(sys, geo, s_end)
    if mesh is None:
        if singular_end:
            mesh = double_graded_grid(s_end, per_band=per_band)
        else:
            mesh = graded_grid(s_end, per_band=per_band)
    else:
        mesh = np.asarray(mesh, dtype=float)
        if mesh[0] != 0.0 or abs(mesh[-1] - s_end) > 1e-12 * max(1.0, s_end):
            raise UsageError("mesh must span [0, s_end]")
        if mesh[1] > 1e-4 * s_end:
            raise UsageError("mesh is not graded at 0; accuracy contract unsatisfiable")
    n_nodes = len(mesh)
    N = geo.dim
    s_pts, wts, phi, dphi, nq = _quadrature_layout(mesh, s_end, True, singular_end)
    q, gdot, u = geo.eval_many(s_pts)
    gmat, gammav, riem, dv, ggdot, gvv = _pointwise_data(sys, q, gdot, u)
    A_loc, B_loc = _kernels.assemble_cells(
        nq,
        np.ascontiguousarray(wts),
        np.ascontiguousarray(u),
        np.ascontiguousarray(gvv),
        np.ascontiguousarray(phi),
        np.ascontiguousarray(dphi),
        np.ascontiguousarray(gmat),
        np.ascontiguousarray(gammav),
        np.ascontiguousarray(riem),
        np.ascontiguousarray(dv),
        np.ascontiguousarray(ggdot),
        np.ascontiguousarray(hess := np.array([sys.hess_potential(qi) for qi in q])),
    )
    if not (np.all(np.isfinite(A_loc)) and np.all(np.isfinite(B_loc))):
        raise QuadratureError("non-finite cell contributions in index-form assembly")
    dim_full = n_nodes * N
    A_full = np.zeros((dim_full, dim_full))
    B_full = np.zeros((dim_full, dim_full))
    for c in range(n_nodes - 1):
        sl = slice(c * N, (c + 2) * N)
        A_full[sl, sl] += A_loc[c]
        B_full[sl, sl] += B_loc[c]
    # constrained basis: node 0 restricted to the boundary tangent
    # hyperplane, last node clamped to zero
    C0 = _tangent_basis(sys, geo.points[0])
    d = C0.shape[1] + (n_nodes - 2) * N
    E = np.zeros((dim_full, d))
    E[:N, : C0.shape[1]] = C0
    for i in range(1, n_nodes - 1):
        E[i * N : (i + 1) * N, C0.shape[1] + (i - 1) * N : C0.shape[1] + i * N] = (
            np.eye(N)
        )
    A = E.T @ A_full @ E
    B = E.T @ B_full @ E
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    return IndexFormDiscretization(
        geodesic=geo,
        s_end=float(s_end),
        mesh=mesh,
        A=A,
        B=B,
        tangent_basis=C0,
        quadrature={"nq": nq, "n_cells": n_nodes - 1, "hess_pts": len(hess)},
    )


# ---------------------------------------------------------------------------
# Eigencounts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MorseCount:
    index: int
    nullity: int
    gap_negative: float  # distance of the largest negative eigenvalue to -tol
    gap_null: float  # smallest |eigenvalue| outside the null band
    tol_null: float
    ambiguous: bool
    eigenvalues: Array


def _null_tolerance(lam: Array) -> float:
    return 1e-6 * max(1.0, float(np.max(np.abs(lam))))


def morse_index(disc: IndexFormDiscretization) -> MorseCount:
    """Index and nullity of the discretized form by eigenvalue counting.

    Eigenvalues are those of A u = lambda B u; index counts lambda below
    -tol_null, nullity counts |lambda| <= tol_null, with tol_null scaled
    to the B-normalized spectrum.
    """
    lam = eigh(disc.A, disc.B, eigvals_only=True)
    tol = _null_tolerance(lam)
    idx = int(np.sum(lam < -tol))
    nul = int(np.sum(np.abs(lam) <= tol))
    neg = lam[lam < -tol]
    outside = np.abs(lam[np.abs(lam) > tol])
    ambiguous = bool(np.any(np.abs(np.abs(lam) - tol) < 0.1 * tol))
    return MorseCount(
        index=idx,
        nullity=nul,
        gap_negative=float(-tol - neg.max()) if len(neg) else np.inf,
        gap_null=float(outside.min()) if len(outside) else np.inf,
        tol_null=tol,
        ambiguous=ambiguous,
        eigenvalues=lam,
    )


def _inertia_index(A: Array) -> int:
    """Number of negative eigenvalues of a symmetric matrix via LDL."""
    _, D, _ = ldl(A)
    neg = 0
    i = 0
    n = D.shape[0]
    while i < n:
        if i + 1 < n and abs(D[i + 1, i]) > 1e-14 * max(1.0, abs(D[i, i])):
            # 2x2 pivot block: one positive and one negative eigenvalue
            # unless the block is definite
            det = D[i, i] * D[i + 1, i + 1] - D[i + 1, i] * D[i, i + 1]
            tr = D[i, i] + D[i + 1, i + 1]
            if det < 0.0:
                neg += 1
            elif tr < 0.0:
                neg += 2
            i += 2
        else:
            if D[i, i] < 0.0:
                neg += 1
            i += 1
    return neg


# ---------------------------------------------------------------------------
# Direct quadrature of the second variation
# ---------------------------------------------------------------------------


def hessian_quadratic(
    sys: PotentialSystem,
    geo: JacobiGeodesic,
    xi: Callable[[Array], Array],
    dxi: Optional[Callable[[Array], Array]] = None,
    s_end: Optional[float] = None,
    per_band: int = 12,
) -> float:
    """Second variation I(xi, xi) by direct graded-mesh quadrature.

    ``xi`` maps an array of arc values to field values (P, N); ``dxi`` is
    its s-derivative (finite differences if omitted).  The field should
    vanish at s_end and be boundary-tangent at 0.
    """
    if s_end is None:
        s_end = geo.arc_length
    singular_end = _end_degenerate(sys, geo, s_end)
    if singular_end:
        mesh = double_graded_grid(s_end, per_band=per_band)
    else:
        mesh = graded_grid(s_end, per_band=per_band)
    s_pts, wts, _, _, _ = _quadrature_layout(mesh, s_end, geo.boundary_start, singular_end)
    q, gdot, u = geo.eval_many(s_pts)
    gmat, gammav, riem, dv, ggdot, gvv = _pointwise_data(sys, q, gdot, u)
    hess = np.array([sys.hess_potential(qi) for qi in q])
    x = np.atleast_2d(np.asarray(xi(s_pts), dtype=float))
    if dxi is not None:
        xp = np.atleast_2d(np.asarray(dxi(s_pts), dtype=float))
    else:
        h = 1e-6 * max(1.0, s_end)
        xp = (np.atleast_2d(xi(s_pts + h)) - np.atleast_2d(xi(s_pts - h))) / (2 * h)
    Dx = xp + np.einsum("pkj,pj->pk", gammav, x)
    val = np.sum(wts * u * np.einsum("pi,pij,pj->p", Dx, gmat, Dx))
    val += np.sum(wts * u * np.einsum("pi,pij,pj->p", x, riem, x))
    val -= 2.0 * np.sum(
        wts * np.einsum("pi,pi->p", dv, x) * np.einsum("pi,pi->p", ggdot, Dx)
    )
    val -= 0.5 * np.sum(wts * gvv * np.einsum("pi,pij,pj->p", x, hess, x))
    if not np.isfinite(val):
        raise QuadratureError("non-finite second-variation quadrature")
    return float(val)


def pair_field_with_basis(
    sys: PotentialSystem,
    geo: JacobiGeodesic,
    xi: Callable[[Array], Array],
    dxi: Callable[[Array], Array],
    disc: IndexFormDiscretization,
) -> tuple[Array, Array]:
    """Pairings I(xi, eta_j) of an analytic field against every basis field.

    Returns (b, norms) over the constrained dofs of ``disc``: b[j] is the
    second-variation pairing of the field with the j-th piecewise-linear
    basis field and norms[j] its weighted-derivative norm.  A candidate
    null field should have ``|b| / norms`` small uniformly; the analytic
    field avoids the interpolation error a nodal representative would
    introduce near the degenerate endpoints.
    """
    s_end = disc.s_end
    mesh = disc.mesh
    singular_end = _end_degenerate(sys, geo, s_end)
    s_pts, wts, phi, dphi, nq = _quadrature_layout(mesh, s_end, True, singular_end)
    q, gdot, u = geo.eval_many(s_pts)
    gmat, gammav, riem, dv, ggdot, gvv = _pointwise_data(sys, q, gdot, u)
    hess = np.array([sys.hess_potential(qi) for qi in q])
    x = np.atleast_2d(np.asarray(xi(s_pts), dtype=float))
    xp = np.atleast_2d(np.asarray(dxi(s_pts), dtype=float))
    if x.shape[0] != len(s_pts):
        x, xp = x.T, xp.T
    Dx = xp + np.einsum("pkj,pj->pk", gammav, x)
    # integrand is linear in (eta, eta'); beta multiplies eta', alpha eta
    beta = u[:, None] * np.einsum("pij,pj->pi", gmat, Dx)
    beta -= np.einsum("pi,pi->p", dv, x)[:, None] * ggdot
    alpha = np.einsum("pji,pj->pi", gammav, beta)
    alpha += u[:, None] * np.einsum("pji,pj->pi", riem, x)
    alpha -= np.einsum("pi,pi->p", ggdot, Dx)[:, None] * dv
    alpha -= 0.5 * gvv[:, None] * np.einsum("pij,pj->pi", hess, x)
    if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
        raise QuadratureError("non-finite integrand in basis pairing")
    n_nodes = len(mesh)
    N = geo.dim
    b_full = np.zeros(n_nodes * N)
    for c in range(n_nodes - 1):
        rows = slice(c * nq, (c + 1) * nq)
        for a_loc in range(2):
            contrib = wts[rows, None] * (
                phi[rows, a_loc, None] * alpha[rows]
                + dphi[rows, a_loc, None] * beta[rows]
            )
            lo = (c + a_loc) * N
            b_full[lo : lo + N] += contrib.sum(axis=0)
    # restrict to constrained dofs: node-0 tangent block, interior nodes
    C0 = disc.tangent_basis
    b = np.concatenate([C0.T @ b_full[:N], b_full[N : (n_nodes - 1) * N]])
    norms = np.sqrt(np.abs(np.diag(disc.B)))
    return b, norms


# ---------------------------------------------------------------------------
# Jacobi fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JacobiFieldSolution:
    """Shot solution of the linearized geodesic equation on [s0, s_end]."""

    s_nodes: Array
    xi: Array  # (m, N) field values
    dxi: Array  # (m, N) covariant derivatives
    residual: float  # max defect of the equation in flux (integrated) form
    dense: Optional[Callable[[Array], Array]] = None

    @property
    def dim(self) -> int:
        return self.xi.shape[1]


def jacobi_field_shoot(
    sys: PotentialSystem,
    geo: JacobiGeodesic,
    s0: float,
    xi0: Array,
    dxi0: Array,
    s_end: float,
    n_out: int = 400,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> JacobiFieldSolution:
    """Integrate the Jacobi equation along a geodesic from data at s0 > 0.

    State is (xi, eta = D xi/ds); the equation's coefficients blow up
    like s^(-2/3) at a degenerate start, hence the s0 > 0 requirement.
    The reported residual is the defect of the flux form
      d/ds[(E-V) D xi - g(gradV, xi) gdot]
        = (E-V) R(gdot,xi)gdot - g(gdot, Dxi) gradV - 0.5 g(gdot,gdot) H[xi]
    measured with the flux evaluated exactly on the dense solution and
    the right side integrated by Gauss quadrature between check nodes.
    """
    if s0 <= 0.0:
        raise UsageError("shooting data must be given at s0 > 0")
    N = geo.dim
    xi0 = np.asarray(xi0, dtype=float)
    dxi0 = np.asarray(dxi0, dtype=float)
    flat = sys.metric_is_flat

    def coeffs(s):
        q, gdot, u = geo.eval_many(np.array([s]))
        q, gdot, u = q[0], gdot[0], float(u[0])
        gmat = sys.metric(q)
        gradv = sys.grad_potential(q)
        dvp = gmat @ gradv
        hess = sys.hess_potential(q)
        return q, gdot, u, gmat, gradv, dvp, hess

    def rhs(s, y):
        x = y[:N]
        eta = y[N:]
        q, gdot, u, gmat, gradv, dvp, hess = coeffs(s)
        up = -float(dvp @ gdot)
        gvv = float(gdot @ gmat @ gdot)
        f = float(dvp @ x)
        fp = float(gdot @ hess @ x) + float(dvp @ eta)
        dgdot = (-up * gdot - 0.5 * gvv * gradv) / u
        hvec = np.linalg.solve(gmat, hess @ x)
        if flat:
            rx = np.zeros(N)
            gam = None
        else:
            gam = christoffel_raw(sys.metric, q, N)
            gamv = np.einsum("kij,i->kj", gam, gdot)
            rx = np.linalg.solve(gmat, curvature_form(sys, q, gdot) @ x)
        deta = (
            -up * eta
            + u * rx
            + fp * gdot
            + f * dgdot
            - float(gdot @ gmat @ eta) * gradv
            - 0.5 * gvv * hvec
        ) / u
        if flat:
            return np.concatenate([eta, deta])
        return np.concatenate(
            [eta - gamv @ x, deta - gamv @ eta]
        )

    sol = solve_ivp(
        rhs,
        (s0, s_end),
        np.concatenate([xi0, dxi0]),
        method="DOP853",
        rtol=rtol,
        atol=atol,
        dense_output=True,
    )
    if sol.status != 0:
        raise StiffnessError(f"Jacobi-field integration failed: {sol.message}")
    ss = np.geomspace(s0, s_end, n_out)
    ys = sol.sol(ss)
    xis = ys[:N].T
    etas = ys[N:].T

    # flux-form defect between consecutive check nodes
    def flux(s):
        y = sol.sol(s)
        x, eta = y[:N], y[N:]
        q, gdot, u, gmat, gradv, dvp, hess = coeffs(s)
        return u * eta - float(dvp @ x) * gdot

    def source(s):
        y = sol.sol(s)
        x, eta = y[:N], y[N:]
        q, gdot, u, gmat, gradv, dvp, hess = coeffs(s)
        gvv = float(gdot @ gmat @ gdot)
        hvec = np.linalg.solve(gmat, hess @ x)
        out = -float(gdot @ gmat @ eta) * gradv - 0.5 * gvv * hvec
        if not flat:
            out = out + u * np.linalg.solve(
                gmat, curvature_form(sys, q, gdot) @ x
            )
        return out

    scale = max(1.0, float(np.max(np.abs(xis))), float(np.max(np.abs(etas))))
    resid = 0.0
    check = ss[:: max(1, n_out // 40)]
    for sl, sr in zip(check[:-1], check[1:]):
        mid = 0.5 * (sl + sr) + 0.5 * (sr - sl) * _GX
        integral = sum(
            wk * source(sk) for wk, sk in zip(_GW, mid)
        ) * 0.5 * (sr - sl)
        defect = flux(sr) - flux(sl) - integral
        resid = max(resid, float(np.max(np.abs(defect))) / ((sr - sl) * scale))
    return JacobiFieldSolution(
        s_nodes=ss, xi=xis, dxi=etas, residual=resid, dense=sol.sol
    )


@dataclass(frozen=True)
class NullBoundaryResult:
    value: float
    inconclusive: bool
    samples_s: Array
    samples_r: Array


def null_boundary_check(
    sys: PotentialSystem, geo: JacobiGeodesic, sol: JacobiFieldSolution
) -> NullBoundaryResult:
    """Degenerate boundary-condition residual of a Jacobi field at s -> 0.

    Evaluates (E-V) D xi - g(gradV, xi) gdot at the five smallest nodes,
    removes the component along gradV at the geodesic start, and
    extrapolates the remaining norm to s = 0 with a c0 + c1 s^(1/3) fit.
    """
    q0 = geo.points[0]
    g0 = sys.metric(q0)
    n_vec = sys.grad_potential(q0)
    n_vec = n_vec / np.sqrt(float(n_vec @ g0 @ n_vec))
    ss = sol.s_nodes[:5]
    rs = []
    for s in ss:
        q, gdot, u = geo.eval_many(np.array([s]))
        q, gdot, u = q[0], gdot[0], float(u[0])
        dvp = sys.grad_partials(q)
        y = sol.dense(s)
        x, eta = y[: sol.dim], y[sol.dim :]
        w_vec = u * eta - float(dvp @ x) * gdot
        w_perp = w_vec - float(n_vec @ g0 @ w_vec) * n_vec
        rs.append(float(np.sqrt(max(w_perp @ g0 @ w_perp, 0.0))))
    rs = np.asarray(rs)
    design = np.column_stack([np.ones_like(ss), np.cbrt(ss)])
    c, *_ = np.linalg.lstsq(design, rs, rcond=None)
    diffs = np.diff(rs)
    monotone = bool(np.all(diffs >= -1e-12) or np.all(diffs <= 1e-12))
    return NullBoundaryResult(
        value=abs(float(c[0])),
        inconclusive=not monotone,
        samples_s=ss,
        samples_r=rs,
    )


# ---------------------------------------------------------------------------
# Conjugate points and the index theorem
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConjugatePoint:
    s: float
    multiplicity: int
    nullity_at_jump: int
    consistent: bool


@dataclass(frozen=True)
class MorseReport:
    a: float
    index: int
    nullity: int
    conjugate_points: list
    staircase: list  # (s, index, nullity)
    mit_consistent: Optional[bool]
    backend: str
    gap_negative: float
    gap_null: float

    def to_json(self) -> dict:
        return {
            "a": self.a,
            "index": self.index,
            "nullity": self.nullity,
            "conjugate_points": [
                {
                    "s": p.s,
                    "multiplicity": p.multiplicity,
                    "nullity_at_jump": p.nullity_at_jump,
                    "consistent": p.consistent,
                }
                for p in self.conjugate_points
            ],
            "staircase": [
                {"s": s, "index": i, "nullity": n} for (s, i, n) in self.staircase
            ],
            "mit_consistent": self.mit_consistent,
            "backend": self.backend,
            "gap_negative": self.gap_negative,
            "gap_null": self.gap_null,
        }


def _index_at(sys, geo, s, per_band) -> int:
    disc = assemble_index_form(sys, geo, s, per_band=per_band)
    return _inertia_index(disc.A)


def conjugate_points(
    sys: PotentialSystem,
    geo: JacobiGeodesic,
    a: float,
    n_samples: int = 24,
    per_band: int = 12,
    tol_s: float = TOL_S,
):
    """Index staircase on (0, a] and conjugate points from its jumps.

    Jumps are located by bisection on the inertia of A (B-independent);
    multiplicity is the jump size, checked against the discrete nullity
    near the jump.
    """
    ss = np.linspace(a / n_samples, a, n_samples)
    staircase = []
    counts = []
    for s in ss:
        disc = assemble_index_form(sys, geo, s, per_band=per_band)
        mc = morse_index(disc)
        staircase.append((float(s), mc.index, mc.nullity))
        counts.append(mc.index)
    points = []
    lo_idx = _index_at(sys, geo, ss[0] * 0.5, per_band)
    prev_s, prev_i = ss[0] * 0.5, lo_idx
    for s, i, _n in staircase:
        if i > prev_i:
            # bisect each unit of the jump range (handles multiple jumps
            # in one sample interval)
            lo, hi = prev_s, s
            ilo = prev_i
            while ilo < i:
                llo, lhi = lo, hi
                while lhi - llo > tol_s:
                    mid = 0.5 * (llo + lhi)
                    if _index_at(sys, geo, mid, per_band) > ilo:
                        lhi = mid
                    else:
                        llo = mid
                s_j = 0.5 * (llo + lhi)
                jump = _index_at(sys, geo, min(s_j + 2 * tol_s, a), per_band) - ilo
                jump = max(jump, 1)
                disc_j = assemble_index_form(sys, geo, s_j, per_band=per_band)
                lam = eigh(disc_j.A, disc_j.B, eigvals_only=True)
                amb = max(_null_tolerance(lam), 10.0 * tol_s)
                nullity_j = int(np.sum(np.abs(lam) <= amb))
                points.append(
                    ConjugatePoint(
                        s=float(s_j),
                        multiplicity=int(jump),
                        nullity_at_jump=nullity_j,
                        consistent=bool(nullity_j == jump),
                    )
                )
                ilo += jump
                lo = s_j
        prev_s, prev_i = s, i
    return staircase, points


def mit_verify(
    sys: PotentialSystem,
    geo: JacobiGeodesic,
    a: float,
    n_samples: int = 24,
    per_band: int = 12,
) -> MorseReport:
    """Check that the index at a equals the conjugate-point count in (0, a)."""
    disc = assemble_index_form(sys, geo, a, per_band=per_band)
    mc = morse_index(disc)
    staircase, points = conjugate_points(
        sys, geo, a, n_samples=n_samples, per_band=per_band
    )
    interior = [p for p in points if p.s < a - TOL_S]
    mult_sum = sum(p.multiplicity for p in interior)
    consistent: Optional[bool]
    if mc.ambiguous:
        consistent = None
    else:
        consistent = bool(mc.index == mult_sum)
    return MorseReport(
        a=float(a),
        index=mc.index,
        nullity=mc.nullity,
        conjugate_points=points,
        staircase=staircase,
        mit_consistent=consistent,
        backend="eigencount",
        gap_negative=mc.gap_negative,
        gap_null=mc.gap_null,
    )


def find_positivity_threshold(
    sys: PotentialSystem,
    geo: JacobiGeodesic,
    a: float,
    per_band: int = 12,
    tol: float = 1e-3,
) -> float:
    """Largest s_hat such that the index form on [0, s] stays positive
    definite for s < s_hat, found by bisection on the smallest eigenvalue."""

    def positive(s):
        disc = assemble_index_form(sys, geo, s, per_band=per_band)
        lam = eigh(disc.A, disc.B, eigvals_only=True)
        return lam[0] > _null_tolerance(lam)

    lo, hi = 0.0, a
    if positive(a):
        return a
    # shrink to find a positive lower bracket
    lo_val = a / 16.0
    while lo_val > 1e-6 * a and not positive(lo_val):
        lo_val /= 2.0
    lo, hi = lo_val, a
    while hi - lo > tol * a:
        mid = 0.5 * (lo + hi)
        if positive(mid):
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# Broken (piecewise-Jacobi) backend
# ---------------------------------------------------------------------------


def _interval_pd(A: Array) -> bool:
    try:
        cho_factor(A)
        return True
    except np.linalg.LinAlgError:
        return False
    except Exception:
        return False


def broken_jacobi_index(
    sys: PotentialSystem,
    geo: JacobiGeodesic,
    a: float,
    subdivision: Optional[Array] = None,
    per_band: int = 10,
    max_retry: int = 3,
):
    """Index/nullity via reduction to broken discrete-Jacobi fields.

    Interior degrees of freedom between subdivision nodes are eliminated
    by static condensation (the discrete analogue of solving per-interval
    Jacobi boundary-value problems); the reduced form lives on the
    (k-1) N + (N-1) interface values, with the per-interval blocks
    checked positive definite so the inertia is preserved.
    """
    if subdivision is None:
        s_hat = find_positivity_threshold(sys, geo, a, per_band=per_band)
        s1 = min(0.9 * s_hat, a / 2.0)
        # interior spacing from positivity of the clamped interior form
        eps = _interior_spacing(sys, geo, a, s1, per_band)
        k = max(1, int(np.ceil((a - s1) / eps)))
        subdivision = np.concatenate([[0.0, s1], s1 + (a - s1) * np.arange(1, k + 1) / k])
        subdivision = np.unique(subdivision)
    subdivision = np.asarray(subdivision, dtype=float)
    rng = np.random.default_rng(0)
    for attempt in range(max_retry + 1):
        try:
            return _broken_reduce(sys, geo, a, subdivision, per_band)
        except np.linalg.LinAlgError:
            if attempt == max_retry:
                raise
            interior = subdivision[1:-1]
            jitter = 0.02 * np.min(np.diff(subdivision)) * rng.standard_normal(
                len(interior)
            )
            subdivision = np.concatenate(
                [[subdivision[0]], np.sort(interior + jitter), [subdivision[-1]]]
            )


def _interior_spacing(sys, geo, a, s1, per_band) -> float:
    """Largest clamped-interval length keeping the interior form PD,
    probed at the far end of [s1, a] (bisection)."""
    lo, hi = 1e-3 * a, a - s1
    if hi <= lo:
        return max(hi, 1e-3 * a)
    if _clamped_pd(sys, geo, a, a - hi, a, per_band):
        return hi
    while hi - lo > 1e-2 * a:
        mid = 0.5 * (lo + hi)
        if _clamped_pd(sys, geo, a, a - mid, a, per_band):
            lo = mid
        else:
            hi = mid
    return 0.9 * lo


def _clamped_pd(sys, geo, a, sl, sr, per_band) -> bool:
    disc = assemble_index_form(sys, geo, a, per_band=per_band)
    N = geo.dim
    nodes = disc.mesh
    n0 = disc.tangent_basis.shape[1]
    sel = []
    for i in range(1, len(nodes) - 1):
        if sl + 1e-12 < nodes[i] < sr - 1e-12:
            base = n0 + (i - 1) * N
            sel.extend(range(base, base + N))
    if not sel:
        return True
    return _interval_pd(disc.A[np.ix_(sel, sel)])


def _broken_reduce(sys, geo, a, subdivision, per_band):
    N = geo.dim
    mesh = np.unique(np.concatenate([graded_grid(a, per_band=per_band), subdivision]))
    disc = assemble_index_form(sys, geo, a, mesh=mesh)
    nodes = disc.mesh
    n0 = disc.tangent_basis.shape[1]
    iface = list(range(n0))  # boundary tangent dofs stay
    interior = []
    interface_nodes = set(
        np.searchsorted(nodes, subdivision[1:-1])
    )
    for i in range(1, len(nodes) - 1):
        base = n0 + (i - 1) * N
        if i in interface_nodes:
            iface.extend(range(base, base + N))
        else:
            interior.extend(range(base, base + N))
    A = disc.A
    A_bb = A[np.ix_(iface, iface)]
    A_bi = A[np.ix_(iface, interior)]
    A_ii = A[np.ix_(interior, interior)]
    cf = cho_factor(A_ii)  # raises LinAlgError if a sub-interval is not PD
    from scipy.linalg import cho_solve

    S = A_bb - A_bi @ cho_solve(cf, A_bi.T)
    S = 0.5 * (S + S.T)
    lam = np.linalg.eigvalsh(S)
    tol = _null_tolerance(lam)
    return int(np.sum(lam < -tol)), int(np.sum(np.abs(lam) <= tol))
