"""Pure numpy implementations of the mask kernels.

Used when the compiled extension is unavailable, and as its reference in tests.
All functions take/return ``uint8`` arrays holding 0/1.
"""

import numpy as np


def rle_runs(flat):
    flat = np.asarray(flat, dtype=np.uint8) != 0
    padded = np.concatenate([[False], flat])
    change = np.flatnonzero(padded[1:] != padded[:-1])
    edges = np.concatenate([[0], change, [flat.size]])
    return np.diff(edges).astype(np.int64)


def rle_expand(runs, n):
    runs = np.asarray(runs, dtype=np.int64)
    if np.any(runs < 0):
        raise ValueError("runs overflow mask size")
    total = int(runs.sum())
    if total != n:
        raise ValueError(f"runs sum to {total}, expected {n}")
    values = (np.arange(runs.size) % 2).astype(np.uint8)
    return np.repeat(values, runs)


def inter_union(a, b):
    a = a != 0
    b = b != 0
    return int(np.count_nonzero(a & b)), int(np.count_nonzero(a | b))


def boundary_map(m):
    fg = m != 0
    padded = np.pad(fg, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return (fg & ~interior).astype(np.uint8)


def _shift_or(src, out, di, dj):
    h, w = src.shape
    a0, a1 = max(di, 0), h + min(di, 0)
    b0, b1 = max(dj, 0), w + min(dj, 0)
    if a0 >= a1 or b0 >= b1:
        return
    out[a0:a1, b0:b1] |= src[a0 - di:a1 - di, b0 - dj:b1 - dj]


def chebyshev_dilate(m, r):
    src = m != 0
    tmp = np.zeros_like(src)
    for dj in range(-r, r + 1):
        _shift_or(src, tmp, 0, dj)
    out = np.zeros_like(src)
    for di in range(-r, r + 1):
        _shift_or(tmp, out, di, 0)
    return out.astype(np.uint8)


def disk_dilate(m, r):
    src = m != 0
    out = np.zeros_like(src)
    for di in range(-r, r + 1):
        for dj in range(-r, r + 1):
            if di * di + dj * dj <= r * r:
                _shift_or(src, out, di, dj)
    return out.astype(np.uint8)
