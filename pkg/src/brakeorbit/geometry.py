"""Pointwise geometric data: metric, Christoffel symbols, curvature,
potential derivatives, boundary projection, energy.

All evaluators are pure functions of the position; a ``PotentialSystem``
bundles them together with the energy level and the domain box that is
asserted to contain the closed sublevel set ``V <= E``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, ProjectionError, UsageError

Array = np.ndarray

TOL_PROJ = 1e-10
PROJ_MAX_ITER = 50


def _fd_step(q: Array) -> float:
    return 1e-5 * (1.0 + float(np.linalg.norm(q)))


@dataclass(frozen=True)
class PointState:
    """Position/velocity pair, optionally tagged with a parameter value."""

    q: Array
    v: Array
    param: Optional[float] = None

    def __post_init__(self):
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.v))):
            raise ValueError("PointState entries must be finite")


@dataclass(frozen=True)
class PotentialSystem:
    """The tuple (g, V, grad V, Hess V, E, N) defining a potential well.

    ``grad_potential`` is the g-gradient; ``hess_potential`` returns the
    covariant Hessian as a symmetric bilinear form (N x N matrix of
    coefficients, so H[xi, eta] = xi @ H @ eta).
    """

    dim: int
    metric: Callable[[Array], Array]
    potential: Callable[[Array], float]
    grad_potential: Callable[[Array], Array]
    hess_potential: Callable[[Array], Array]
    energy: float
    domain_box: Array  # (N, 2)
    reg_band: float = 0.0
    name: str = "custom"
    metric_is_flat: bool = True
    # optional batched evaluators (M, N) -> (M,) / (M, N); None falls
    # back to pointwise loops
    potential_many: Optional[Callable[[Array], Array]] = None
    partials_many: Optional[Callable[[Array], Array]] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.reg_band <= 0.0:
            object.__setattr__(self, "reg_band", 0.2 * abs(self.energy) + 0.05)

    # -- convenience -------------------------------------------------------

    def in_box(self, q: Array) -> bool:
        return bool(
            np.all(q >= self.domain_box[:, 0]) and np.all(q <= self.domain_box[:, 1])
        )

    def require_in_box(self, q: Array):
        if not self.in_box(q):
            raise DomainError(f"point {q} outside domain box")

    def u(self, q: Array) -> float:
        """Well depth E - V(q)."""
        return self.energy - self.potential(q)

    def grad_partials(self, q: Array) -> Array:
        """Euclidean partial derivatives dV = g * gradV."""
        return self.metric(q) @ self.grad_potential(q)

    def u_many(self, qs: Array) -> Array:
        """Well depth at a batch of points."""
        if self.potential_many is not None:
            return self.energy - self.potential_many(qs)
        return self.energy - np.array([self.potential(q) for q in qs])

    def grad_partials_many(self, qs: Array) -> Array:
        """Partial derivatives dV at a batch of points."""
        if self.partials_many is not None:
            return self.partials_many(qs)
        return np.array([self.grad_partials(q) for q in qs])

    def g_norm(self, q: Array, v: Array) -> float:
        return float(np.sqrt(max(v @ self.metric(q) @ v, 0.0)))


# ---------------------------------------------------------------------------
# Pointwise operations
# ---------------------------------------------------------------------------


def energy(sys: PotentialSystem, q: Array, v: Array) -> float:
    """Total energy 0.5*g(v,v) + V(q)."""
    return 0.5 * float(v @ sys.metric(q) @ v) + sys.potential(q)


def metric_partials(sys: PotentialSystem, q: Array, h: Optional[float] = None) -> Array:
    """dg[l, i, j] = d g_ij / d q_l by central differences."""
    n = sys.dim
    h = _fd_step(q) if h is None else h
    dg = np.empty((n, n, n))
    for l in range(n):
        e = np.zeros(n)
        e[l] = h
        dg[l] = (sys.metric(q + e) - sys.metric(q - e)) / (2.0 * h)
    return dg


def christoffel(sys: PotentialSystem, q: Array) -> Array:
    """Christoffel symbols Gamma[k, i, j] of the metric at q.

    Uses central finite differences of the metric with step
    h = 1e-5 * (1 + |q|); symmetric in (i, j).
    """
    sys.require_in_box(q)
    if sys.metric_is_flat:
        return np.zeros((sys.dim, sys.dim, sys.dim))
    g = sys.metric(q)
    ginv = np.linalg.inv(g)
    dg = metric_partials(sys, q)
    # Gamma^k_ij = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij)
    gamma = np.empty((sys.dim, sys.dim, sys.dim))
    for k in range(sys.dim):
        for i in range(sys.dim):
            for j in range(sys.dim):
                s = 0.0
                for l in range(sys.dim):
                    s += ginv[k, l] * (dg[i, j, l] + dg[j, i, l] - dg[l, i, j])
                gamma[k, i, j] = 0.5 * s
    return gamma


def riemann_operator(sys: PotentialSystem, q: Array, h: Optional[float] = None) -> Array:
    """Curvature tensor components R[l, i, j, k] with
    R(X, Y)Z = R[l, i, j, k] X^i Y^j Z^k e_l, computed from finite
    differences of the Christoffel symbols.

    Convention: R(X,Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z -
    nabla_[X,Y] Z, so that the round sphere has sectional curvature +1.
    """
    n = sys.dim
    if sys.metric_is_flat:
        return np.zeros((n, n, n, n))
    h = _fd_step(q) if h is None else h
    dgamma = np.empty((n, n, n, n))  # dgamma[i, l, j, k] = d_i Gamma^l_jk
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        dgamma[i] = (christoffel(sys, q + e) - christoffel(sys, q - e)) / (2.0 * h)
    gam = christoffel(sys, q)
    # R^l_{ijk} = d_i Gamma^l_jk - d_j Gamma^l_ik
    #             + Gamma^l_im Gamma^m_jk - Gamma^l_jm Gamma^m_ik
    riem = (
        np.einsum("iljk->lijk", dgamma)
        - np.einsum("jlik->lijk", dgamma)
        + np.einsum("lim,mjk->lijk", gam, gam)
        - np.einsum("ljm,mik->lijk", gam, gam)
    )
    return riem


def riemann_quadratic(
    sys: PotentialSystem, q: Array, X: Array, Y: Array, Z: Array, W: Array
) -> float:
    """Scalar g(R(X, Y)Z, W) at q."""
    sys.require_in_box(q)
    if sys.metric_is_flat:
        return 0.0
    riem = riemann_operator(sys, q)
    rz = np.einsum("lijk,i,j,k->l", riem, X, Y, Z)
    return float(rz @ sys.metric(q) @ W)


def curvature_form(sys: PotentialSystem, q: Array, gdot: Array) -> Array:
    """Symmetric matrix Rm with xi @ Rm @ eta = g(R(gdot, xi)gdot, eta)."""
    n = sys.dim
    if sys.metric_is_flat:
        return np.zeros((n, n))
    riem = riemann_operator(sys, q)
    g = sys.metric(q)
    # g(R(gdot, xi) gdot, eta) = g_{lm} R^l_{ijk} gdot^i xi^j gdot^k eta^m
    rm = np.einsum("lijk,i,k,lm->jm", riem, gdot, gdot, g)
    return 0.5 * (rm + rm.T)


def project_to_boundary(
    sys: PotentialSystem,
    q: Array,
    tol: float = TOL_PROJ,
    max_iter: int = PROJ_MAX_ITER,
) -> Array:
    """Newton iteration along the potential gradient onto V^{-1}(E).

    Requires the starting point to lie in the regular band |V - E| < reg_band.
    """
    q = np.asarray(q, dtype=float).copy()
    if abs(sys.potential(q) - sys.energy) >= sys.reg_band:
        raise DomainError(
            f"projection start V={sys.potential(q):.6g} outside the regular band "
            f"around E={sys.energy:.6g}"
        )
    for _ in range(max_iter):
        r = sys.potential(q) - sys.energy
        if abs(r) <= tol:
            return q
        grad = sys.grad_potential(q)
        dV = sys.metric(q) @ grad
        denom = float(dV @ grad)
        if denom <= 0.0:
            raise ProjectionError("vanishing potential gradient during projection")
        q = q - (r / denom) * grad
    raise ProjectionError(f"no convergence in {max_iter} Newton steps")


# ---------------------------------------------------------------------------
# Built-in potential / metric registry
# ---------------------------------------------------------------------------


def _finite_diff_grad(f, q, h):
    n = len(q)
    out = np.empty(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        out[i] = (f(q + e) - f(q - e)) / (2.0 * h)
    return out


def _finite_diff_hess(f, q, h):
    n = len(q)
    out = np.empty((n, n))
    f0 = f(q)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        out[i, i] = (f(q + ei) - 2.0 * f0 + f(q - ei)) / h**2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h
            out[i, j] = out[j, i] = (
                f(q + ei + ej) - f(q + ei - ej) - f(q - ei + ej) + f(q - ei - ej)
            ) / (4.0 * h**2)
    return out


_METRICS: dict[str, Callable[[int], tuple[Callable, bool]]] = {}


def _register_metric(name):
    def deco(fn):
        _METRICS[name] = fn
        return fn

    return deco


@_register_metric("euclidean")
def _metric_euclidean(dim):
    eye = np.eye(dim)
    return (lambda q: eye), True


@_register_metric("diag_exp")
def _metric_diag_exp(dim):
    # g = diag(e^{2 q_1}, 1, ..., 1)
    def g(q):
        d = np.ones(dim)
        d[0] = np.exp(2.0 * q[0])
        return np.diag(d)

    return g, False


@_register_metric("poly_diag")
def _metric_poly_diag(dim):
    # g = diag(1 + q_1^2, 1, ..., 1)
    def g(q):
        d = np.ones(dim)
        d[0] = 1.0 + q[0] ** 2
        return np.diag(d)

    return g, False


@_register_metric("sphere2")
def _metric_sphere2(dim):
    # round unit 2-sphere in (theta, phi) coordinates
    if dim != 2:
        raise UsageError("sphere2 metric requires dim=2")

    def g(q):
        return np.diag([1.0, np.sin(q[0]) ** 2])

    return g, False


def _poly_eval(coeffs, q):
    # coeffs: list of [c, e_1, ..., e_N]
    total = 0.0
    for term in coeffs:
        c = term[0]
        mono = 1.0
        for x, e in zip(q, term[1:]):
            mono *= x**e
        total += c * mono
    return total


def _poly_grad(coeffs, q):
    n = len(q)
    out = np.zeros(n)
    for term in coeffs:
        c = term[0]
        exps = term[1:]
        for i in range(n):
            if exps[i] == 0:
                continue
            mono = c * exps[i]
            for j in range(n):
                e = exps[j] - (1 if j == i else 0)
                mono *= q[j] ** e
            out[i] += mono
    return out


def _poly_hess(coeffs, q):
    n = len(q)
    out = np.zeros((n, n))
    for term in coeffs:
        c = term[0]
        exps = list(term[1:])
        for i in range(n):
            for j in range(n):
                ei = exps[i] - (1 if i == j else 0)
                if exps[i] == 0 or (i == j and exps[i] < 2):
                    continue
                fac = c * exps[i] * (exps[j] if i != j else exps[i] - 1)
                if i != j and exps[j] == 0:
                    continue
                mono = fac
                for k in range(n):
                    e = exps[k] - (1 if k == i else 0) - (1 if k == j else 0)
                    mono *= q[k] ** e
                out[i, j] += mono
    return out


def _builtin_potential(kind: str, dim: int, options: dict):
    """Return (V, dV, d2V) as plain-coordinate callables."""
    if kind == "harmonic":
        return (
            lambda q: 0.5 * float(q @ q),
            lambda q: np.asarray(q, dtype=float).copy(),
            lambda q: np.eye(dim),
        )
    if kind == "anisotropic_harmonic":
        w = np.asarray(options.get("weights", [float((i + 1) ** 2) for i in range(dim)]))
        if len(w) != dim:
            raise UsageError("anisotropic_harmonic weights must match dim")
        return (
            lambda q: 0.5 * float(w @ (q * q)),
            lambda q: w * q,
            lambda q: np.diag(w),
        )
    if kind == "double_well":
        # 1D: (q^2 - 1)^2; higher dims add a harmonic trap transversally
        def V(q):
            v = (q[0] ** 2 - 1.0) ** 2
            if dim > 1:
                v += 0.5 * float(q[1:] @ q[1:])
            return v

        def dV(q):
            out = np.zeros(dim)
            out[0] = 4.0 * q[0] * (q[0] ** 2 - 1.0)
            if dim > 1:
                out[1:] = q[1:]
            return out

        def d2V(q):
            out = np.eye(dim)
            out[0, 0] = 12.0 * q[0] ** 2 - 4.0
            return out

        return V, dV, d2V
    raise UsageError(f"unknown builtin potential {kind!r}")


def _batch_potential(kind: str, dim: int, options: dict):
    """Vectorized (V, dV) over point batches for the built-in potentials."""
    if kind == "harmonic":
        return (
            lambda qs: 0.5 * np.einsum("pi,pi->p", qs, qs),
            lambda qs: np.array(qs, dtype=float),
        )
    if kind == "anisotropic_harmonic":
        w = np.asarray(options.get("weights", [float((i + 1) ** 2) for i in range(dim)]))
        return lambda qs: 0.5 * (qs * qs) @ w, lambda qs: qs * w
    if kind == "double_well":

        def Vm(qs):
            v = (qs[:, 0] ** 2 - 1.0) ** 2
            if dim > 1:
                v = v + 0.5 * np.einsum("pi,pi->p", qs[:, 1:], qs[:, 1:])
            return v

        def dVm(qs):
            out = np.array(qs, dtype=float)
            out[:, 0] = 4.0 * qs[:, 0] * (qs[:, 0] ** 2 - 1.0)
            return out

        return Vm, dVm
    return None, None


def make_system(
    name: str = "harmonic",
    dim: int = 1,
    energy: float = 0.5,
    metric: str = "euclidean",
    box: Optional[Array] = None,
    reg_band: float = 0.0,
    **options,
) -> PotentialSystem:
    """Build a PotentialSystem from the built-in registry.

    ``potential=`` is accepted as an alias for ``name=``; unknown keyword
    options are rejected rather than silently ignored.
    """
    if "potential" in options:
        name = options.pop("potential")
    allowed = {"weights"}
    extra = set(options) - allowed
    if extra:
        raise UsageError(f"unknown system options: {sorted(extra)}")
    if metric not in _METRICS:
        raise UsageError(f"unknown metric {metric!r}")
    gfun, flat = _METRICS[metric](dim)
    V, dV, d2V = _builtin_potential(name, dim, options)
    Vm, dVm = _batch_potential(name, dim, options)
    return _assemble_system(
        name, dim, energy, gfun, flat, V, dV, d2V, box, reg_band, Vm=Vm, dVm=dVm
    )


def _assemble_system(
    name, dim, energy, gfun, flat, V, dV, d2V, box, reg_band, Vm=None, dVm=None
):
    def grad_g(q):
        # g-gradient: g^{-1} dV
        return np.linalg.solve(gfun(q), dV(q))

    def hess_cov(q):
        # covariant Hessian as a bilinear form: d2V - Gamma^k_ij d_k V
        h = d2V(q)
        if flat:
            return h
        gam = christoffel_raw(gfun, q, dim)
        return h - np.einsum("kij,k->ij", gam, dV(q))

    if box is None:
        # crude default: expand until V > E on the box faces, then pad
        half = 1.0
        for _ in range(60):
            probe = np.full(dim, half)
            corners_ok = all(
                V(probe * s) > energy
                for s in np.array(np.meshgrid(*[[-1.0, 1.0]] * dim)).T.reshape(-1, dim)
            )
            if corners_ok and V(probe) > energy:
                break
            half *= 1.3
        half *= 1.5
        box_arr = np.column_stack([-np.full(dim, half), np.full(dim, half)])
    else:
        box_arr = np.asarray(box, dtype=float)

    return PotentialSystem(
        dim=dim,
        metric=gfun,
        potential=lambda q: float(V(q)),
        grad_potential=grad_g,
        hess_potential=hess_cov,
        energy=float(energy),
        domain_box=box_arr,
        reg_band=reg_band,
        name=name,
        metric_is_flat=flat,
        potential_many=Vm,
        partials_many=dVm,
    )


def christoffel_raw(gfun, q, dim, h=None):
    """Christoffel symbols straight from a metric callable (no system)."""
    h = _fd_step(np.asarray(q)) if h is None else h
    dg = np.empty((dim, dim, dim))
    for l in range(dim):
        e = np.zeros(dim)
        e[l] = h
        dg[l] = (gfun(q + e) - gfun(q - e)) / (2.0 * h)
    ginv = np.linalg.inv(gfun(q))
    gamma = np.empty((dim, dim, dim))
    for k in range(dim):
        for i in range(dim):
            for j in range(dim):
                s = 0.0
                for l in range(dim):
                    s += ginv[k, l] * (dg[i, j, l] + dg[j, i, l] - dg[l, i, j])
                gamma[k, i, j] = 0.5 * s
    return gamma


def system_from_spec(spec: dict) -> PotentialSystem:
    """Build a system from the JSON potential spec.

    Schema: {"name": ..., "dim": N, "kind": "polynomial"|"builtin",
    "coefficients": [[c, e1, ..., eN], ...], "energy": E,
    "box": [[lo, hi], ...]}.
    """
    try:
        dim = int(spec["dim"])
        kind = spec["kind"]
        E = float(spec["energy"])
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed potential spec: {exc}") from exc
    box = np.asarray(spec["box"], dtype=float) if "box" in spec else None
    metric = spec.get("metric", "euclidean")
    if kind == "builtin":
        return make_system(
            spec.get("name", "harmonic"),
            dim=dim,
            energy=E,
            metric=metric,
            box=box,
            **spec.get("options", {}),
        )
    if kind == "polynomial":
        coeffs = spec["coefficients"]
        for term in coeffs:
            if len(term) != dim + 1:
                raise UsageError("each polynomial term needs [c, e1, ..., eN]")
        gfun, flat = _METRICS[metric](dim)

        def Vm(qs):
            total = np.zeros(len(qs))
            for term in coeffs:
                total += term[0] * np.prod(qs ** np.asarray(term[1:]), axis=1)
            return total

        return _assemble_system(
            spec.get("name", "polynomial"),
            dim,
            E,
            gfun,
            flat,
            lambda q: _poly_eval(coeffs, q),
            lambda q: _poly_grad(coeffs, q),
            lambda q: _poly_hess(coeffs, q),
            box,
            float(spec.get("reg_band", 0.0)),
            Vm=Vm,
            dVm=lambda qs: np.array([_poly_grad(coeffs, q) for q in qs]),
        )
    raise UsageError(f"unknown potential kind {kind!r}")


def load_system(path: str) -> PotentialSystem:
    with open(path) as fh:
        return system_from_spec(json.load(fh))
