"""Curve containers shared by the dynamics, geodesic and Morse layers.

Trajectories are time-parameterized solutions of the Newton system;
geodesics are arc-parameterized curves of the conformally rescaled
metric.  Both are immutable after construction and safe to share.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Array = np.ndarray

TOL_E = 1e-8
TOL_V = 1e-7
TOL_RT = 1e-6
TOL_CONS = 1e-6


@dataclass(frozen=True)
class NaturalTrajectory:
    """Time grid plus states of an energy-E solution of the Newton system."""

    times: Array
    positions: Array  # (m, N)
    velocities: Array  # (m, N)
    energy_residual: float
    energy: float
    dense: Optional[Callable[[float], Array]] = None  # t -> stacked (q, v, s)
    arc: Optional[Array] = None  # unit-speed arc parameter s(t) on the grid

    def __post_init__(self):
        dt = np.diff(self.times)
        if len(dt) and dt.min() <= 0.0:
            raise ValueError("times must be strictly increasing")

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def state(self, t: float) -> tuple[Array, Array]:
        if self.dense is None:
            raise ValueError("trajectory has no dense output")
        y = self.dense(t)
        n = self.dim
        return y[:n], y[n : 2 * n]

    def arc_of_time(self, t):
        if self.dense is None:
            raise ValueError("trajectory has no dense output")
        y = self.dense(t)
        return y[2 * self.dim] if y.shape[0] > 2 * self.dim else None

    def to_csv(self, path: str):
        n = self.dim
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["t"]
                + [f"q_{i+1}" for i in range(n)]
                + [f"v_{i+1}" for i in range(n)]
                + ["energy_residual"]
            )
            for k, t in enumerate(self.times):
                w.writerow(
                    [f"{t:.17g}"]
                    + [f"{x:.17g}" for x in self.positions[k]]
                    + [f"{x:.17g}" for x in self.velocities[k]]
                    + [f"{self.energy_residual:.17g}"]
                )

    def to_json(self) -> dict:
        return {
            "times": self.times.tolist(),
            "positions": self.positions.tolist(),
            "velocities": self.velocities.tolist(),
            "energy": self.energy,
            "energy_residual": self.energy_residual,
        }


@dataclass(frozen=True)
class BrakeOrbit:
    """Half period of a brake orbit: rest-to-rest arc between boundary points."""

    trajectory: NaturalTrajectory
    half_period: float

    @property
    def start(self) -> Array:
        return self.trajectory.positions[0]

    @property
    def end(self) -> Array:
        return self.trajectory.positions[-1]


@dataclass(frozen=True)
class ReparamMap:
    """Sampled monotone time change t(s) with inverse sigma(t)."""

    s_nodes: Array
    t_nodes: Array
    constant: float

    def __post_init__(self):
        if np.any(np.diff(self.t_nodes) <= 0.0):
            raise ValueError("t(s) must be strictly increasing")

    def t_of_s(self, s):
        from scipy.interpolate import PchipInterpolator

        return PchipInterpolator(self.s_nodes, self.t_nodes)(s)

    def sigma(self, t):
        from scipy.interpolate import PchipInterpolator

        return PchipInterpolator(self.t_nodes, self.s_nodes)(t)

    def roundtrip_error(self) -> float:
        return float(np.max(np.abs(self.sigma(self.t_of_s(self.s_nodes)) - self.s_nodes)))


@dataclass(frozen=True)
class JacobiGeodesic:
    """Arc-parameterized geodesic of the degenerate conformal metric.

    ``conservation_constant`` is the constant value of
    0.5 (E - V) g(gdot, gdot); 1 means unit-speed parameterization.
    The optional ``evaluator`` maps arc values to exact curve data and is
    used by the index-form quadratures; it returns (q, gdot, u) arrays.
    """

    s_grid: Array
    points: Array  # (m, N)
    velocities: Array  # (m, N)
    conservation_constant: float
    boundary_start: bool
    energy: float
    residuals: dict = field(default_factory=dict)
    truncated: bool = False
    evaluator: Optional[Callable[[Array], tuple[Array, Array, Array]]] = None

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def arc_length(self) -> float:
        return float(self.s_grid[-1])

    def eval_many(self, s: Array) -> tuple[Array, Array, Array]:
        """Curve data (q, gdot, u) at arbitrary arc values."""
        if self.evaluator is not None:
            return self.evaluator(np.asarray(s, dtype=float))
        from scipy.interpolate import PchipInterpolator

        s = np.asarray(s, dtype=float)
        q = PchipInterpolator(self.s_grid, self.points, axis=0)(s)
        v = PchipInterpolator(self.s_grid, self.velocities, axis=0)(s)
        return q, v, np.full(len(s), np.nan)

    def to_csv(self, path: str, sys=None):
        n = self.dim
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["s"]
                + [f"gamma_{i+1}" for i in range(n)]
                + [f"gammadot_{i+1}" for i in range(n)]
                + ["well_depth", "conservation_residual"]
            )
            for k, s in enumerate(self.s_grid):
                u = np.nan
                res = np.nan
                if sys is not None:
                    u = sys.energy - sys.potential(self.points[k])
                    gv = self.velocities[k]
                    if np.all(np.isfinite(gv)):
                        res = 0.5 * u * float(gv @ sys.metric(self.points[k]) @ gv) - (
                            self.conservation_constant
                        )
                w.writerow(
                    [f"{s:.17g}"]
                    + [f"{x:.17g}" for x in self.points[k]]
                    + [f"{x:.17g}" for x in self.velocities[k]]
                    + [f"{u:.17g}", f"{res:.17g}"]
                )

    def to_json(self) -> dict:
        return {
            "s_grid": self.s_grid.tolist(),
            "points": self.points.tolist(),
            "velocities": self.velocities.tolist(),
            "conservation_constant": self.conservation_constant,
            "boundary_start": self.boundary_start,
            "truncated": self.truncated,
            "residuals": {k: float(v) for k, v in self.residuals.items()},
        }


def graded_grid(a: float, first: float = 1e-8, ratio: float = 0.5, per_band: int = 8) -> Array:
    """Mesh on [0, a] geometrically graded toward 0.

    Dyadic bands [a*ratio^{k+1}, a*ratio^k] each split into ``per_band``
    uniform cells, down to a first cell of about ``first * a``.
    """
    if a <= 0.0:
        raise ValueError("arc length must be positive")
    n_bands = max(1, int(np.ceil(np.log(1.0 / first) / np.log(1.0 / ratio))))
    edges = [0.0]
    lo = a * ratio**n_bands
    edges.extend(np.linspace(0.0, lo, 2)[1:])
    prev = lo
    for k in range(n_bands - 1, -1, -1):
        hi = a * ratio**k
        edges.extend(np.linspace(prev, hi, per_band + 1)[1:])
        prev = hi
    grid = np.unique(np.asarray(edges))
    grid[-1] = a
    return grid


def double_graded_grid(
    a: float, first: float = 1e-8, ratio: float = 0.5, per_band: int = 8
) -> Array:
    """Mesh on [0, a] geometrically graded toward both endpoints."""
    g = graded_grid(a, first=first, ratio=ratio, per_band=per_band)
    grid = np.unique(np.concatenate([g, a - g]))
    # merge near-duplicates from the two gradings meeting in the middle
    keep = np.concatenate([[True], np.diff(grid) > 1e-10 * a])
    grid = grid[keep]
    grid[0], grid[-1] = 0.0, a
    return grid


def dump_json(obj: dict, path: str):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
