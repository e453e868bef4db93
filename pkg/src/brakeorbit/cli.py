"""Command-line entry point.

Subcommands expose the brake-orbit solver, the boundary-start geodesic
lift, both boundary-distance backends, distance fields, the Morse/
conjugate-point report and a self-contained verification suite.  All
flags are long-form; a JSON config file supplies defaults that explicit
flags override.  Exit codes: 0 success, 1 usage error, 2 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys as _sys

import numpy as np

from .curves import dump_json, graded_grid
from .distance import (
    distance_field,
    grad_dV,
    minimize_shooting,
    minimize_variational,
)
from .dynamics import (
    boundary_start_arc,
    geodesic_from_orbit,
    orbit_from_geodesic,
    shoot_brake_orbit,
)
from .errors import BrakeOrbitError, UsageError
from .geometry import load_system, make_system
from .jacobi import asymptotic_exponents
from .morse import find_positivity_threshold, mit_verify

PROG = "brakeorbit"


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated floats, got {text!r}") from exc


def _grid_shape(text: str) -> tuple:
    try:
        parts = tuple(int(x) for x in text.lower().split("x"))
    except ValueError as exc:
        raise UsageError(f"expected a grid like 16x16, got {text!r}") from exc
    if not parts or any(p <= 0 for p in parts):
        raise UsageError(f"grid sides must be positive, got {text!r}")
    return parts


class _Parser(argparse.ArgumentParser):
    """Argument parser whose errors map to the usage exit code."""

    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog=PROG, allow_abbrev=False)
    sub = p.add_subparsers(dest="command")

    def common(sp):
        sp.add_argument("--config", help="JSON file with flag defaults")
        sp.add_argument("--potential", help="builtin name or JSON spec path")
        sp.add_argument("--dim", type=int)
        sp.add_argument("--energy", type=float)
        sp.add_argument("--weights", type=_float_list)
        sp.add_argument("--out-dir", dest="out_dir")
        sp.add_argument("--format", choices=["csv", "json"])
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)

    sp = sub.add_parser("brake-orbit", allow_abbrev=False)
    common(sp)
    sp.add_argument("--start", type=_float_list)
    sp.add_argument("--t-max", dest="t_max", type=float)

    sp = sub.add_parser("geodesic", allow_abbrev=False)
    common(sp)
    sp.add_argument("--start", type=_float_list)
    sp.add_argument("--arc", type=float)

    sp = sub.add_parser("distance", allow_abbrev=False)
    common(sp)
    sp.add_argument("--point", type=_float_list)
    sp.add_argument("--backend", choices=["variational", "shooting"])
    sp.add_argument("--n-start", dest="n_start", type=int)
    sp.add_argument("--with-grad", dest="with_grad", action="store_true")

    sp = sub.add_parser("distance-field", allow_abbrev=False)
    common(sp)
    sp.add_argument("--grid", type=_grid_shape)
    sp.add_argument("--backend", choices=["variational", "shooting"])
    sp.add_argument("--n-start", dest="n_start", type=int)
    sp.add_argument("--with-grad", dest="with_grad", action="store_true")

    sp = sub.add_parser("morse", allow_abbrev=False)
    common(sp)
    sp.add_argument("--start", type=_float_list)
    sp.add_argument("--arc", type=float)
    sp.add_argument("--samples", type=int)
    sp.add_argument("--per-band", dest="per_band", type=int)

    sp = sub.add_parser("verify", allow_abbrev=False)
    common(sp)
    # only flags the user actually passed should reach the config merge
    for child in sub.choices.values():
        for action in child._actions:
            action.default = argparse.SUPPRESS
    return p


_DEFAULTS = {
    "potential": "harmonic",
    "dim": 1,
    "energy": 0.5,
    "weights": None,
    "out_dir": ".",
    "format": "json",
    "seed": None,
    "threads": 1,
    "start": None,
    "arc": None,
    "t_max": 100.0,
    "point": None,
    "backend": None,
    "n_start": 8,
    "with_grad": False,
    "grid": (16, 16),
    "samples": 24,
    "per_band": 12,
}


def _merge_config(ns: argparse.Namespace) -> dict:
    """Defaults, then config-file values, then explicit flags."""
    given = vars(ns)
    cfg = dict(_DEFAULTS)
    path = given.get("config")
    if path is not None:
        try:
            with open(path) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
        for key, val in file_cfg.items():
            dest = key.replace("-", "_")
            if dest not in cfg:
                raise UsageError(f"unknown config key {key!r}")
            cfg[dest] = val
    cfg.update({k: v for k, v in given.items() if k != "config"})
    if cfg["seed"] is None:
        cfg["seed"] = int(os.environ.get("BRAKEORBIT_SEED", "0"))
    return cfg


def _system(cfg: dict):
    name = cfg["potential"]
    if isinstance(name, str) and (name.endswith(".json") or os.path.exists(name)):
        return load_system(name)
    options = {}
    if cfg["weights"] is not None:
        options["weights"] = list(cfg["weights"])
    try:
        return make_system(
            dim=int(cfg["dim"]), energy=float(cfg["energy"]), name=name, **options
        )
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _require(cfg, key, flag):
    if cfg[key] is None:
        raise UsageError(f"{flag} is required")
    return cfg[key]


def _out(cfg, filename):
    os.makedirs(cfg["out_dir"], exist_ok=True)
    return os.path.join(cfg["out_dir"], filename)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_brake_orbit(cfg):
    sysm = _system(cfg)
    x0 = np.asarray(_require(cfg, "start", "--start"), dtype=float)
    orbit = shoot_brake_orbit(sysm, x0, t_max=float(cfg["t_max"]))
    orbit.trajectory.to_csv(_out(cfg, "brake_orbit.csv"))
    summary = {
        "command": "brake-orbit",
        "half_period": orbit.half_period,
        "start": orbit.start.tolist(),
        "end": orbit.end.tolist(),
        "energy": sysm.energy,
        "energy_residual": orbit.trajectory.energy_residual,
    }
    dump_json(summary, _out(cfg, "brake_orbit.json"))
    print(f"T={orbit.half_period:.6f} end={np.array2string(orbit.end, precision=6)}")
    return 0


def _cmd_geodesic(cfg):
    sysm = _system(cfg)
    x0 = np.asarray(_require(cfg, "start", "--start"), dtype=float)
    a = _require(cfg, "arc", "--arc")
    geo = boundary_start_arc(sysm, x0, float(a))
    geo.to_csv(_out(cfg, "geodesic.csv"), sys=sysm)
    summary = {"command": "geodesic", **geo.to_json()}
    if geo.boundary_start and not geo.truncated:
        fit = asymptotic_exponents(sysm, geo)
        summary["exponents"] = {
            "well_depth": fit.alpha_well_depth,
            "speed": fit.alpha_speed,
            "sigma_bound_ratio": fit.sigma_bound_ratio,
        }
    dump_json(summary, _out(cfg, "geodesic.json"))
    print(
        f"arc={geo.arc_length:.6f} truncated={geo.truncated} "
        f"conservation={geo.residuals.get('conservation', float('nan')):.2e}"
    )
    return 0


def _dist_result_json(sysm, Q, res, with_grad):
    out = {
        "point": np.asarray(Q, dtype=float).tolist(),
        "value": res.value,
        "backend": res.backend,
        "unique": res.unique,
        "spread": res.spread,
        "start_values": list(res.start_values),
    }
    if with_grad:
        g = grad_dV(sysm, Q, result=res)
        out["grad"] = None if g.grad_distance is None else g.grad_distance.tolist()
        out["grad_squared"] = (
            None if g.grad_squared is None else g.grad_squared.tolist()
        )
        out["grad_message"] = g.message
    return out


def _cmd_distance(cfg):
    sysm = _system(cfg)
    Q = np.asarray(_require(cfg, "point", "--point"), dtype=float)
    backend = cfg["backend"] or "variational"
    solver = minimize_shooting if backend == "shooting" else minimize_variational
    res = solver(sysm, Q, n_start=int(cfg["n_start"]), seed=int(cfg["seed"]))
    summary = {"command": "distance", **_dist_result_json(sysm, Q, res, cfg["with_grad"])}
    dump_json(summary, _out(cfg, "distance.json"))
    print(f"d={res.value:.8f} backend={res.backend} unique={res.unique}")
    return 0


def _cmd_distance_field(cfg):
    sysm = _system(cfg)
    backend = cfg["backend"] or "shooting"
    shape = tuple(cfg["grid"])
    if len(shape) != sysm.dim:
        raise UsageError(f"--grid has {len(shape)} sides for a {sysm.dim}-d system")
    cells = distance_field(
        sysm,
        shape,
        n_start=int(cfg["n_start"]),
        seed=int(cfg["seed"]),
        threads=int(cfg["threads"]),
        with_grad=bool(cfg["with_grad"]),
        backend=backend,
    )
    n = sysm.dim
    with open(_out(cfg, "distance_field.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            [f"center_{i+1}" for i in range(n)]
            + ["d", "unique", "exterior"]
            + [f"grad_{i+1}" for i in range(n)]
            + ["error"]
        )
        for c in cells:
            grad = c.grad if c.grad is not None else [float("nan")] * n
            w.writerow(
                [f"{x:.17g}" for x in c.center]
                + [f"{c.value:.17g}", int(c.unique), int(c.exterior)]
                + [f"{x:.17g}" for x in grad]
                + [c.error]
            )
    n_fail = sum(bool(c.error) for c in cells)
    summary = {
        "command": "distance-field",
        "shape": list(shape),
        "backend": backend,
        "n_cells": len(cells),
        "n_exterior": int(sum(c.exterior for c in cells)),
        "n_nonunique": int(sum((not c.unique) and (not c.exterior) for c in cells)),
        "n_failed": n_fail,
        "max_value": float(
            max((c.value for c in cells if np.isfinite(c.value)), default=0.0)
        ),
    }
    dump_json(summary, _out(cfg, "distance_field.json"))
    print(
        f"cells={len(cells)} exterior={summary['n_exterior']} failed={n_fail} "
        f"max_d={summary['max_value']:.6f}"
    )
    return 0


def _cmd_morse(cfg):
    sysm = _system(cfg)
    x0 = np.asarray(_require(cfg, "start", "--start"), dtype=float)
    a = float(_require(cfg, "arc", "--arc"))
    geo = boundary_start_arc(sysm, x0, a, strict=True)
    report = mit_verify(
        sysm, geo, a, n_samples=int(cfg["samples"]), per_band=int(cfg["per_band"])
    )
    dump_json({"command": "morse", **report.to_json()}, _out(cfg, "morse.json"))
    with open(_out(cfg, "morse_staircase.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "index", "nullity"])
        for s, i, nu in report.staircase:
            w.writerow([f"{s:.17g}", i, nu])
    print(
        f"index={report.index} nullity={report.nullity} "
        f"conjugate_points={len(report.conjugate_points)} "
        f"consistent={report.mit_consistent}"
    )
    return 0


# ---------------------------------------------------------------------------
# Verification suite
# ---------------------------------------------------------------------------


def _verify_checks(seed: int):
    """Deterministic invariant suite over the analytic test wells."""
    checks = []

    def record(name, ok, **data):
        checks.append({"name": name, "passed": bool(ok), **data})

    s1 = make_system(dim=1, potential="harmonic", energy=0.5)
    orbit = shoot_brake_orbit(s1, np.array([1.0]))
    t = orbit.trajectory.times
    sup = float(np.max(np.abs(orbit.trajectory.positions[:, 0] - np.cos(t))))
    record(
        "half_period",
        abs(orbit.half_period - np.pi) <= 1e-6 and sup <= 1e-6,
        half_period=orbit.half_period,
        sup_error=sup,
    )

    geo = geodesic_from_orbit(s1, orbit)
    back = orbit_from_geodesic(s1, geo)
    sup_rt = float(
        np.max(np.abs(back.positions[:, 0] - np.cos(back.times)))
    )
    record(
        "maupertuis_roundtrip",
        sup_rt <= 1e-6 and abs(geo.arc_length - np.pi / 4) <= 1e-5,
        arc_length=geo.arc_length,
        sup_error=sup_rt,
    )

    s2 = make_system(dim=2, potential="harmonic", energy=0.5)
    geo2 = boundary_start_arc(s2, np.array([1.0, 0.0]), 0.7)
    for name, sysm, g in (("exponents_1d", s1, geo), ("exponents_2d", s2, geo2)):
        fit = asymptotic_exponents(sysm, g)
        record(
            name,
            abs(fit.alpha_well_depth - 2.0 / 3.0) <= 0.05
            and abs(fit.alpha_speed + 1.0 / 3.0) <= 0.05,
            well_depth_exponent=fit.alpha_well_depth,
            speed_exponent=fit.alpha_speed,
            sigma_bound_ratio=fit.sigma_bound_ratio,
        )

    q0 = np.array([0.0])
    rv = minimize_variational(s1, q0, seed=seed)
    rs = minimize_shooting(s1, q0, seed=seed)
    record(
        "distance_backends_1d",
        abs(rv.value - np.pi / 8) <= 1e-4
        and abs(rs.value - np.pi / 8) <= 1e-4
        and abs(rv.value - rs.value) <= 1e-4
        and not rv.unique
        and not rs.unique,
        variational=rv.value,
        shooting=rs.value,
        disagreement=abs(rv.value - rs.value),
    )

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(3):
        while True:
            Q = rng.uniform(-0.8, 0.8, 2)
            if 0.1 < np.linalg.norm(Q) < 0.8:
                break
        res = minimize_shooting(s2, Q, n_start=0)
        g = grad_dV(s2, Q, result=res).grad_distance
        h = 1e-4
        fd = np.empty(2)
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            fd[k] = (
                minimize_shooting(s2, Q + e, n_start=0).value
                - minimize_shooting(s2, Q - e, n_start=0).value
            ) / (2 * h)
        worst = max(worst, float(np.linalg.norm(g - fd) / np.linalg.norm(fd)))
    record("gradient_formula_2d", worst <= 1e-3, worst_relative_error=worst)

    a = 0.9 * np.pi / 4
    geo_m = boundary_start_arc(s2, np.array([1.0, 0.0]), a)
    report = mit_verify(s2, geo_m, a, n_samples=16)
    ok = (
        report.index == 1
        and report.mit_consistent is True
        and len(report.conjugate_points) == 1
        and abs(report.conjugate_points[0].s - np.pi / 8) <= 1e-3
    )
    record(
        "morse_index_2d",
        ok,
        index=report.index,
        nullity=report.nullity,
        conjugate_points=[
            {"s": p.s, "multiplicity": p.multiplicity}
            for p in report.conjugate_points
        ],
    )

    s_hat = find_positivity_threshold(s2, geo_m, a)
    record("small_interval_positivity", s_hat > 0.0, s_hat=s_hat)

    rv2 = minimize_variational(s1, q0, seed=seed)
    record(
        "multistart_determinism",
        rv2.value == rv.value and rv2.start_values == rv.start_values,
        value=rv2.value,
    )
    return checks, report


def _cmd_verify(cfg):
    checks, report = _verify_checks(int(cfg["seed"]))
    n_pass = sum(c["passed"] for c in checks)
    summary = {
        "command": "verify",
        "seed": int(cfg["seed"]),
        "n_checks": len(checks),
        "n_passed": n_pass,
        "all_passed": n_pass == len(checks),
        "checks": checks,
    }
    dump_json(summary, _out(cfg, "verify.json"))
    with open(_out(cfg, "verify_staircase.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "index", "nullity"])
        for s, i, nu in report.staircase:
            w.writerow([f"{s:.17g}", i, nu])
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}")
    print(f"{n_pass}/{len(checks)} checks passed")
    return 0 if n_pass == len(checks) else 2


_COMMANDS = {
    "brake-orbit": _cmd_brake_orbit,
    "geodesic": _cmd_geodesic,
    "distance": _cmd_distance,
    "distance-field": _cmd_distance_field,
    "morse": _cmd_morse,
    "verify": _cmd_verify,
}


def run(argv) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
        command = getattr(ns, "command", None)
        if command is None:
            raise UsageError("a subcommand is required")
        del ns.command
        cfg = _merge_config(ns)
        if cfg["threads"] is not None and int(cfg["threads"]) < 1:
            raise UsageError("--threads must be at least 1")
        return _COMMANDS[command](cfg)
    except (UsageError, ValueError) as exc:
        # precondition violations (off-boundary start, bad energies)
        # surface as ValueError from the library layer
        print(f"{PROG}: usage error: {exc}", file=_sys.stderr)
        return 1
    except BrakeOrbitError as exc:
        print(f"{PROG}: numerical failure: {exc}", file=_sys.stderr)
        return 2


def main():
    raise SystemExit(run(_sys.argv[1:]))


if __name__ == "__main__":
    main()
