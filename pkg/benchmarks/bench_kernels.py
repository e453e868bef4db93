"""Benchmark the index-form assembly kernel: compiled vs NumPy backend.

Times ``assemble_cells`` on synthetic per-quadrature-point data shaped
like a real assembly run (graded mesh, Gauss rule per cell) and reports
the speedup.  Run as a script:

    python benchmarks/bench_kernels.py [--cells 480] [--dim 3] [--repeat 20]
"""

import argparse
import time

import numpy as np


def make_inputs(n_cells, nq, dim, rng):
    P = n_cells * nq
    w = rng.uniform(1e-4, 1e-2, P)
    u = rng.uniform(1e-3, 0.5, P)
    gvv = rng.uniform(0.5, 4.0, P)
    phi = rng.uniform(0.0, 1.0, (P, 2))
    dphi = rng.uniform(-50.0, 50.0, (P, 2))
    a = rng.standard_normal((P, dim, dim))
    gmat = np.einsum("pij,pkj->pik", a, a) + 2.0 * np.eye(dim)
    gammav = 0.1 * rng.standard_normal((P, dim, dim))
    riem = rng.standard_normal((P, dim, dim))
    riem = 0.5 * (riem + riem.transpose(0, 2, 1))
    dv = rng.standard_normal((P, dim))
    ggdot = rng.standard_normal((P, dim))
    hess = rng.standard_normal((P, dim, dim))
    hess = 0.5 * (hess + hess.transpose(0, 2, 1))
    return (nq, w, u, gvv, phi, dphi, gmat, gammav, riem, dv, ggdot, hess)


def bench(fn, args, repeat):
    fn(*args)  # warm up
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cells", type=int, default=480)
    ap.add_argument("--nq", type=int, default=6)
    ap.add_argument("--dim", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    from brakeorbit._kernels import pure

    backends = [("numpy", pure.assemble_cells)]
    try:
        from brakeorbit._kernels import _core

        backends.append(("cython", _core.assemble_cells))
    except ImportError:
        print("compiled extension not available; benchmarking NumPy only")

    rng = np.random.default_rng(7)
    inputs = make_inputs(args.cells, args.nq, args.dim, rng)

    results = {}
    for name, fn in backends:
        results[name] = bench(fn, inputs, args.repeat)
        print(f"{name:>8}: {1e3 * results[name]:8.3f} ms "
              f"({args.cells} cells, nq={args.nq}, dim={args.dim})")

    if len(backends) == 2:
        a_np, b_np = backends[0][1](*inputs)
        a_cy, b_cy = backends[1][1](*inputs)
        err = max(
            float(np.max(np.abs(a_np - a_cy))), float(np.max(np.abs(b_np - b_cy)))
        )
        print(f"max backend discrepancy: {err:.3e}")
        print(f"speedup (numpy/cython): {results['numpy'] / results['cython']:.2f}x")


if __name__ == "__main__":
    main()
