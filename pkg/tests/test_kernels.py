"""Parity between the compiled and NumPy assembly kernels."""

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brakeorbit._kernels import pure

try:
    from brakeorbit._kernels import _core
except ImportError:  # pragma: no cover - depends on build environment
    _core = None

needs_ext = pytest.mark.skipif(_core is None, reason="compiled extension absent")


def random_inputs(rng, n_cells, nq, dim):
    P = n_cells * nq
    sym = lambda m: 0.5 * (m + m.transpose(0, 2, 1))
    a = rng.standard_normal((P, dim, dim))
    return (
        nq,
        rng.uniform(1e-4, 1e-2, P),
        rng.uniform(1e-3, 0.5, P),
        rng.uniform(0.5, 4.0, P),
        rng.uniform(0.0, 1.0, (P, 2)),
        rng.uniform(-50.0, 50.0, (P, 2)),
        np.einsum("pij,pkj->pik", a, a) + 2.0 * np.eye(dim),
        0.1 * rng.standard_normal((P, dim, dim)),
        sym(rng.standard_normal((P, dim, dim))),
        rng.standard_normal((P, dim)),
        rng.standard_normal((P, dim)),
        sym(rng.standard_normal((P, dim, dim))),
    )


@needs_ext
@given(
    seed=st.integers(0, 2**31 - 1),
    n_cells=st.integers(1, 8),
    nq=st.sampled_from([3, 6]),
    dim=st.integers(1, 3),
)
@settings(max_examples=25, deadline=None)
def test_backends_agree(seed, n_cells, nq, dim):
    rng = np.random.default_rng(seed)
    args = random_inputs(rng, n_cells, nq, dim)
    a_np, b_np = pure.assemble_cells(*args)
    a_cy, b_cy = _core.assemble_cells(*args)
    assert np.allclose(a_np, a_cy, rtol=1e-12, atol=1e-12)
    assert np.allclose(b_np, b_cy, rtol=1e-12, atol=1e-12)


def test_blocks_symmetric_in_exact_arithmetic():
    rng = np.random.default_rng(0)
    args = random_inputs(rng, 4, 6, 2)
    a_loc, b_loc = pure.assemble_cells(*args)
    assert np.allclose(b_loc, b_loc.transpose(0, 2, 1))
    assert np.allclose(a_loc, a_loc.transpose(0, 2, 1))


@needs_ext
def test_env_var_selects_numpy_backend():
    env = dict(os.environ, BRAKEORBIT_NO_EXT="1")
    out = subprocess.run(
        [sys.executable, "-c", "import brakeorbit; print(brakeorbit.kernel_backend)"],
        capture_output=True,
        text=True,
        env=env,
        check=True,
    )
    assert out.stdout.strip() == "numpy"


def test_default_backend_reported():
    import brakeorbit

    assert brakeorbit.kernel_backend in ("cython", "numpy")
