"""Assembly kernels: compiled extension if available, NumPy otherwise.

``assemble_cells`` and ``BACKEND`` are re-exported from whichever
implementation loads; set BRAKEORBIT_NO_EXT=1 to force the NumPy path.
"""

import os

if os.environ.get("BRAKEORBIT_NO_EXT"):
    from .pure import BACKEND, assemble_cells  # noqa: F401
else:
    try:
        from ._core import BACKEND, assemble_cells  # noqa: F401
    except ImportError:  # pragma: no cover - depends on build environment
        from .pure import BACKEND, assemble_cells  # noqa: F401
