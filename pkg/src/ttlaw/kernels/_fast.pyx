# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Fused C kernel for design-matrix assembly.

Semantics of record live in ``_ref``; this module only removes the
temporary arrays of the numpy route and streams each design row once.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def fill_design(double[:, ::1] D, double[:, ::1] left, double[:, ::1] right,
                double[:, ::1] feat, long long[:, ::1] blocks):
    cdef Py_ssize_t n_blocks = blocks.shape[0]
    cdef Py_ssize_t M = D.shape[0]
    cdef Py_ssize_t m, k, a, b, col
    cdef Py_ssize_t i, a0, la, b0, lb, col0
    cdef double f, v
    for m in range(M):
        for k in range(n_blocks):
            i = blocks[k, 0]
            a0 = blocks[k, 1]
            la = blocks[k, 2]
            b0 = blocks[k, 3]
            lb = blocks[k, 4]
            col0 = blocks[k, 5]
            f = feat[m, i]
            col = col0
            for a in range(la):
                v = left[m, a0 + a] * f
                for b in range(lb):
                    D[m, col] = v * right[m, b0 + b]
                    col += 1
