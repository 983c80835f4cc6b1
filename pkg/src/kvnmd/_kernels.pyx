# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled stencil-times-diagonal kernel used by the matrix-free Liouvillian."""

import numpy as np


def stencil_diag_apply(const double complex[:, :, ::1] psi,
                       const double[:, :, ::1] vel,
                       const Py_ssize_t[::1] offsets,
                       const double[::1] weights,
                       double complex[:, :, ::1] out,
                       double complex scale):
    """out[o, i, m] += scale * vel[o, i, m] * sum_k weights[k] * psi[o, (i + offsets[k]) % g, m]."""
    cdef Py_ssize_t n_out = psi.shape[0]
    cdef Py_ssize_t g = psi.shape[1]
    cdef Py_ssize_t n_in = psi.shape[2]
    cdef Py_ssize_t nk = offsets.shape[0]
    cdef Py_ssize_t o, i, m, k, src
    cdef double w
    cdef double complex[::1] acc = np.zeros(n_in, dtype=np.complex128)
    with nogil:
        for o in range(n_out):
            for i in range(g):
                for m in range(n_in):
                    acc[m] = 0
                for k in range(nk):
                    w = weights[k]
                    src = (i + offsets[k]) % g
                    if src < 0:
                        src = src + g
                    for m in range(n_in):
                        acc[m] = acc[m] + w * psi[o, src, m]
                for m in range(n_in):
                    out[o, i, m] = out[o, i, m] + scale * vel[o, i, m] * acc[m]
