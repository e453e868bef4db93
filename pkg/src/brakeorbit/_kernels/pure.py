"""NumPy reference implementation of the index-form assembly kernel.

Given per-quadrature-point geometric data along a geodesic, produces the
local 2N x 2N stiffness and Gram blocks of every mesh cell for a
piecewise-linear vector-field basis.  Mirrors the compiled kernel in
``_core``; either backend may be selected at import time.
"""

import numpy as np

BACKEND = "numpy"


def assemble_cells(nq, w, u, gvv, phi, dphi, gmat, gammav, riem, dv, ggdot, hess):
    """Local stiffness (A) and Gram (B) blocks per mesh cell.

    Parameters (P = total quadrature points = n_cells * nq):
      w      (P,)     quadrature weights including jacobians
      u      (P,)     well depth E - V
      gvv    (P,)     g(gdot, gdot)
      phi    (P, 2)   values of the two nodal hats at each point
      dphi   (P, 2)   their s-derivatives
      gmat   (P,N,N)  metric
      gammav (P,N,N)  Gamma(gdot, .): gammav[k, j] = Gamma^k_ij gdot^i
      riem   (P,N,N)  curvature form: xi' riem eta = g(R(gdot,xi)gdot, eta)
      dv     (P,N)    potential partials (g gradV)
      ggdot  (P,N)    g gdot
      hess   (P,N,N)  covariant Hessian of V

    Returns (A_loc, B_loc), each (n_cells, 2N, 2N), with local dof
    ordering (node, component).
    """
    P = len(w)
    N = gmat.shape[1]
    ncells = P // nq
    eye = np.eye(N)
    # covariant derivative operator of each hat: Dxi = dphi I + phi Gamma(gdot)
    bop = dphi[:, :, None, None] * eye + phi[:, :, None, None] * gammav[:, None]
    core = np.einsum("p,p,pami,pmk,pbkj->pabij", w, u, bop, gmat, bop, optimize=True)
    a_pt = core.copy()
    a_pt += np.einsum("p,p,pa,pb,pij->pabij", w, u, phi, phi, riem, optimize=True)
    sb = np.einsum("pm,pbmj->pbj", ggdot, bop, optimize=True)
    cross = np.einsum("p,pa,pi,pbj->pabij", w, phi, dv, sb, optimize=True)
    a_pt -= cross + cross.transpose(0, 2, 1, 4, 3)
    a_pt -= 0.5 * np.einsum(
        "p,p,pa,pb,pij->pabij", w, gvv, phi, phi, hess, optimize=True
    )

    def fold(m):
        m = m.reshape(ncells, nq, 2, 2, N, N).sum(axis=1)
        return m.transpose(0, 1, 3, 2, 4).reshape(ncells, 2 * N, 2 * N)

    return fold(a_pt), fold(core)
