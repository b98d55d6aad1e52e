"""Pure-Python versions of the compiled kernels in ``_kernels.pyx``."""

from __future__ import annotations

import numpy as np


def _hafnian(w: list[list[float]]) -> float:
    m = len(w)
    full = (1 << m) - 1
    table = [0.0] * (full + 1)
    table[0] = 1.0
    for mask in range(1, full + 1):
        if bin(mask).count("1") & 1:
            continue
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        acc = 0.0
        for j in range(i + 1, m):
            if (rest >> j) & 1 and w[i][j] != 0.0:
                acc += w[i][j] * table[rest & ~(1 << j)]
        table[mask] = acc
    return table[full]


def hafnian_batch(weights: np.ndarray) -> np.ndarray:
    weights = np.asarray(weights, dtype=np.float64)
    nb, m, m2 = weights.shape
    if m != m2:
        raise ValueError("weight matrices must be square")
    if m > 26:
        raise ValueError("too many legs for the bitmask matching sum")
    if m % 2 == 1:
        return np.zeros(nb)
    if m == 0:
        return np.ones(nb)
    return np.array([_hafnian(weights[b].tolist()) for b in range(nb)])


def nn_map_batch(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    nb, n, _ = points.shape
    if n < 2:
        raise ValueError("need at least two points")
    diff = points[:, :, None, :] - points[:, None, :, :]
    dist = np.einsum("bijk,bijk->bij", diff, diff)
    idx = np.arange(n)
    dist[:, idx, idx] = np.inf
    # argmin returns the first minimiser, which is the lowest index
    return np.argmin(dist, axis=2).astype(np.int64)
