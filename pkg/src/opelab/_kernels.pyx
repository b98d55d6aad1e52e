# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: perfect-matching sums and nearest-neighbour maps."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef extern from *:
    int __builtin_popcount(unsigned int) nogil


cdef double _hafnian(const double[:, :] w, int m, double* table) noexcept nogil:
    # table[mask] = sum over perfect matchings of the vertices in mask
    cdef Py_ssize_t full = (1 << m) - 1
    cdef Py_ssize_t mask, rest
    cdef int i, j
    cdef double acc
    table[0] = 1.0
    for mask in range(1, full + 1):
        table[mask] = 0.0
        # only even subsets carry matchings
        if __builtin_popcount(<unsigned int>mask) & 1:
            continue
        i = 0
        while not (mask >> i) & 1:
            i += 1
        rest = mask & ~(1 << i)
        acc = 0.0
        for j in range(i + 1, m):
            if (rest >> j) & 1 and w[i, j] != 0.0:
                acc += w[i, j] * table[rest & ~(1 << j)]
        table[mask] = acc
    return table[full]



def hafnian_batch(cnp.ndarray[cnp.float64_t, ndim=3] weights not None):
    """Sum over perfect matchings of each symmetric matrix in a stack.

    ``weights`` has shape (batch, m, m); only the strict upper triangle is read.
    Odd ``m`` gives zeros, ``m == 0`` gives ones.
    """
    cdef Py_ssize_t nb = weights.shape[0]
    cdef int m = <int>weights.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(nb, dtype=np.float64)
    cdef double[:, :, :] wv = weights
    cdef double* table
    cdef Py_ssize_t b
    if weights.shape[2] != m:
        raise ValueError("weight matrices must be square")
    if m > 26:
        raise ValueError("too many legs for the bitmask matching sum")
    if m % 2 == 1:
        return out
    if m == 0:
        out[:] = 1.0
        return out
    table = <double*>malloc((<size_t>1 << m) * sizeof(double))
    if table == NULL:
        raise MemoryError()
    try:
        with nogil:
            for b in range(nb):
                out[b] = _hafnian(wv[b], m, table)
    finally:
        free(table)
    return out


def nn_map_batch(cnp.ndarray[cnp.float64_t, ndim=3] points not None):
    """Nearest-neighbour index for every point of every configuration.

    ``points`` has shape (batch, n, d). Ties go to the lowest index.
    """
    cdef Py_ssize_t nb = points.shape[0], n = points.shape[1], d = points.shape[2]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out = np.empty((nb, n), dtype=np.int64)
    cdef double[:, :, :] pv = points
    cdef cnp.int64_t[:, :] ov = out
    cdef Py_ssize_t b, i, j, k, best
    cdef double dist, diff, best_dist
    if n < 2:
        raise ValueError("need at least two points")
    with nogil:
        for b in range(nb):
            for i in range(n):
                best = -1
                best_dist = 0.0
                for j in range(n):
                    if j == i:
                        continue
                    dist = 0.0
                    for k in range(d):
                        diff = pv[b, i, k] - pv[b, j, k]
                        dist = dist + diff * diff
                    if best < 0 or dist < best_dist:
                        best = j
                        best_dist = dist
                ov[b, i] = best
    return out
