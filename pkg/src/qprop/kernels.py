"""Backend selection for the mask kernels.

The compiled extension ``qprop._kernels`` is used when it imports; otherwise
the numpy fallback in ``qprop._kernels_py`` is used. Both produce identical
outputs. ``use_backend`` switches explicitly (tests and the benchmark use it).
"""

from __future__ import annotations

import numpy as np

from qprop import _kernels_py

try:
    from qprop import _kernels as _native
except ImportError:  # extension not built
    _native = None

_BACKENDS = {"python": _kernels_py}
if _native is not None:
    _BACKENDS["native"] = _native

_active = _BACKENDS.get("native", _kernels_py)


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def backend() -> str:
    return "native" if _active is _native and _native is not None else "python"


def use_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}")
    _active = _BACKENDS[name]


def _u8(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.uint8)


def rle_runs(flat: np.ndarray) -> np.ndarray:
    """Value-alternating run lengths of a flat 0/1 array, starting with zeros."""
    return _active.rle_runs(_u8(flat).ravel())


def rle_expand(runs, n: int) -> np.ndarray:
    return _active.rle_expand(np.ascontiguousarray(runs, dtype=np.int64), int(n))


def inter_union(a: np.ndarray, b: np.ndarray) -> tuple[int, int]:
    return _active.inter_union(_u8(a), _u8(b))


def boundary_map(m: np.ndarray) -> np.ndarray:
    """Foreground pixels with a 4-neighbour in the background (frame edge counts)."""
    return _active.boundary_map(_u8(m))


def chebyshev_dilate(m: np.ndarray, r: int) -> np.ndarray:
    if r <= 0:
        return _u8(m).copy()
    return _active.chebyshev_dilate(_u8(m), int(r))


def disk_dilate(m: np.ndarray, r: int) -> np.ndarray:
    if r <= 0:
        return _u8(m).copy()
    return _active.disk_dilate(_u8(m), int(r))
