# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled index-form assembly kernel (typed-loop version of ``pure``)."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


def assemble_cells(int nq,
                   double[::1] w,
                   double[::1] u,
                   double[::1] gvv,
                   double[:, ::1] phi,
                   double[:, ::1] dphi,
                   double[:, :, ::1] gmat,
                   double[:, :, ::1] gammav,
                   double[:, :, ::1] riem,
                   double[:, ::1] dv,
                   double[:, ::1] ggdot,
                   double[:, :, ::1] hess):
    """Local stiffness and Gram blocks per mesh cell; see ``pure.assemble_cells``."""
    cdef Py_ssize_t P = w.shape[0]
    cdef Py_ssize_t N = gmat.shape[1]
    cdef Py_ssize_t ncells = P // nq
    cdef cnp.ndarray[cnp.float64_t, ndim=3] A = np.zeros((ncells, 2 * N, 2 * N))
    cdef cnp.ndarray[cnp.float64_t, ndim=3] B = np.zeros((ncells, 2 * N, 2 * N))
    cdef double[:, :, ::1] Av = A
    cdef double[:, :, ::1] Bv = B
    # scratch: covariant-derivative operators of the two hats, and g * bop
    cdef cnp.ndarray[cnp.float64_t, ndim=3] bop_arr = np.zeros((2, 8, 8))
    cdef cnp.ndarray[cnp.float64_t, ndim=3] gb_arr = np.zeros((2, 8, 8))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] sb_arr = np.zeros((2, 8))
    cdef double[:, :, ::1] bop = bop_arr
    cdef double[:, :, ::1] gb = gb_arr
    cdef double[:, ::1] sb = sb_arr
    cdef Py_ssize_t p, c, a, b, i, j, k, m
    cdef double acc, wp, up, core

    if N > 8:
        raise ValueError("kernel supports dimension <= 8")

    for p in range(P):
        c = p // nq
        wp = w[p]
        up = u[p]
        for a in range(2):
            for k in range(N):
                for j in range(N):
                    bop[a, k, j] = phi[p, a] * gammav[p, k, j]
                bop[a, k, k] += dphi[p, a]
            # gb[a] = gmat @ bop[a]; sb[a] = ggdot @ bop[a]
            for k in range(N):
                for j in range(N):
                    acc = 0.0
                    for m in range(N):
                        acc += gmat[p, k, m] * bop[a, m, j]
                    gb[a, k, j] = acc
            for j in range(N):
                acc = 0.0
                for m in range(N):
                    acc += ggdot[p, m] * bop[a, m, j]
                sb[a, j] = acc
        for a in range(2):
            for b in range(2):
                for i in range(N):
                    for j in range(N):
                        core = 0.0
                        for m in range(N):
                            core += bop[a, m, i] * gb[b, m, j]
                        core *= wp * up
                        acc = core
                        acc += wp * up * phi[p, a] * phi[p, b] * riem[p, i, j]
                        acc -= wp * phi[p, a] * dv[p, i] * sb[b, j]
                        acc -= wp * phi[p, b] * dv[p, j] * sb[a, i]
                        acc -= 0.5 * wp * gvv[p] * phi[p, a] * phi[p, b] * hess[p, i, j]
                        Av[c, a * N + i, b * N + j] += acc
                        Bv[c, a * N + i, b * N + j] += core
    return A, B
