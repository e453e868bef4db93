"""Build script: compiles the optional Cython assembly kernel.

The package works without the extension (a NumPy fallback is selected at
import time), so a failed compile only disables the fast path.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/brakeorbit/_kernels/_core.pyx"],
        language_level=3,
    )
    for ext in ext_modules:
        ext.include_dirs.append(numpy.get_include())
except Exception as exc:  # pragma: no cover
    sys.stderr.write(f"brakeorbit: skipping Cython kernel build ({exc})\n")

setup(ext_modules=ext_modules)
