"""Backend selection for the hot offset-scan kernels.

The compiled extension is used when it was built; otherwise the NumPy
fallback is loaded.  ``use_backend`` switches explicitly (benchmarks and
cross-backend tests rely on it).
"""

from __future__ import annotations

import importlib

import numpy as np

_BACKENDS = {"cython": "carleman_lab._ckernels", "python": "carleman_lab._pykernels"}


def available_backends() -> list[str]:
    names = []
    for name, module in _BACKENDS.items():
        try:
            importlib.import_module(module)
        except ImportError:
            continue
        names.append(name)
    return names


def use_backend(name: str) -> None:
    global BACKEND, _impl
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; choose from {sorted(_BACKENDS)}")
    _impl = importlib.import_module(_BACKENDS[name])
    BACKEND = name


try:
    use_backend("cython")
except ImportError:
    use_backend("python")


def _offsets(di, dj):
    return (
        np.ascontiguousarray(di, dtype=np.int64),
        np.ascontiguousarray(dj, dtype=np.int64),
    )


def offset_max_abs_diff(v: np.ndarray, di, dj) -> np.ndarray:
    """For each offset ``t = (di, dj)``: ``max_x |v[x - t] - v[x]|`` on the periodic grid."""
    di, dj = _offsets(di, dj)
    v = np.ascontiguousarray(v, dtype=np.float64)
    return np.asarray(_impl.offset_max_abs_diff(v, di, dj))


def offset_weighted_diff(v: np.ndarray, di, dj, w) -> np.ndarray:
    """``sum_k w_k (v[x - t_k] - v[x])`` on the periodic grid."""
    di, dj = _offsets(di, dj)
    v = np.ascontiguousarray(v, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    return np.asarray(_impl.offset_weighted_diff(v, di, dj, w))
