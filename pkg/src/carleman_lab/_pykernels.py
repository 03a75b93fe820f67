"""NumPy fallback for the periodic offset-scan kernels in ``_ckernels``."""

import numpy as np


def _shifted(padded, n0, n1, a, b):
    # padded = v tiled 2x2, so v[x - t] is a plain slice
    return padded[n0 - a : 2 * n0 - a, n1 - b : 2 * n1 - b]


def offset_max_abs_diff(v, di, dj):
    v = np.ascontiguousarray(v, dtype=np.float64)
    n0, n1 = v.shape
    padded = np.tile(v, (2, 2))
    out = np.zeros(len(di))
    for k, (a, b) in enumerate(zip(np.mod(di, n0), np.mod(dj, n1))):
        out[k] = np.max(np.abs(_shifted(padded, n0, n1, a, b) - v))
    return out


def offset_weighted_diff(v, di, dj, w):
    v = np.ascontiguousarray(v, dtype=np.float64)
    n0, n1 = v.shape
    padded = np.tile(v, (2, 2))
    out = np.zeros_like(v)
    for a, b, wk in zip(np.mod(di, n0), np.mod(dj, n1), w):
        out += wk * (_shifted(padded, n0, n1, a, b) - v)
    return out
