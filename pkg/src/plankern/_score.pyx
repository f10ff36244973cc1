# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled pairwise kernel scoring over precomputed node embeddings.

Semantically identical to _score_py.score_pair; the explicit loops avoid
per-call numpy dispatch overhead, which dominates at floor-plan sizes
(a handful of nodes per graph).
"""

from libc.math cimport exp

COMPILED = True


def score_pair(
    double[:, ::1] h1,
    double[:, ::1] w1,
    double[::1] sq1,
    double[:, ::1] h2,
    double[:, ::1] w2,
    double[::1] sq2,
    double mu,
):
    cdef Py_ssize_t n1 = h1.shape[0]
    cdef Py_ssize_t n2 = h2.shape[0]
    cdef Py_ssize_t d = h1.shape[1]
    cdef Py_ssize_t m = w1.shape[1]
    cdef Py_ssize_t u, v, k
    cdef double acc = 0.0
    cdef double dot, wdot, d2
    for u in range(n1):
        for v in range(n2):
            dot = 0.0
            for k in range(d):
                dot += h1[u, k] * h2[v, k]
            wdot = 0.0
            for k in range(m):
                wdot += w1[u, k] * w2[v, k]
            d2 = sq1[u] + sq2[v] - 2.0 * dot
            if d2 < 0.0:
                d2 = 0.0
            acc += wdot * exp(-mu * d2)
    return acc
