# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled mask kernels. Semantics must match ``_kernels_py`` bit for bit."""

import numpy as np
cimport numpy as cnp
from libc.string cimport memset

cnp.import_array()


def rle_runs(const unsigned char[::1] flat):
    cdef Py_ssize_t n = flat.shape[0]
    cdef Py_ssize_t i, k = 0
    out = np.empty(n + 2, dtype=np.int64)
    if n == 0:
        return np.zeros(1, dtype=np.int64)
    cdef long long[::1] o = out
    cdef const unsigned char* p = &flat[0]
    # o[0 .. k] are run boundaries, written branch-free so noise stays cheap;
    # a leading foreground run gets a zero-length background head
    o[0] = 0
    o[1] = 0
    k = 1 if p[0] != 0 else 0
    for i in range(1, n):
        o[k + 1] = i
        k += (p[i] != 0) != (p[i - 1] != 0)
    o[k + 1] = n
    return np.diff(out[:k + 2])


def rle_expand(const long long[::1] runs, Py_ssize_t n):
    out = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] o = out
    cdef Py_ssize_t i, pos = 0
    cdef long long r
    cdef bint val = 0
    for i in range(runs.shape[0]):
        r = runs[i]
        if r < 0 or pos + r > n:
            raise ValueError("runs overflow mask size")
        if val and r > 0:
            memset(&o[pos], 1, r)
        pos += r
        val = not val
    if pos != n:
        raise ValueError(f"runs sum to {pos}, expected {n}")
    return out


def inter_union(const unsigned char[:, ::1] a, const unsigned char[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0] * a.shape[1], i
    cdef long long inter = 0, union = 0
    cdef unsigned char x, y
    if n == 0:
        return 0, 0
    cdef const unsigned char* pa = &a[0, 0]
    cdef const unsigned char* pb = &b[0, 0]
    for i in range(n):
        x = pa[i] != 0
        y = pb[i] != 0
        inter += x & y
        union += x | y
    return inter, union


def boundary_map(const unsigned char[:, ::1] m):
    cdef Py_ssize_t h = m.shape[0], w = m.shape[1], i, j
    out = np.zeros((h, w), dtype=np.uint8)
    if h == 0 or w == 0:
        return out
    cdef unsigned char[:, ::1] o = out
    cdef const unsigned char* up
    cdef const unsigned char* row
    cdef const unsigned char* down
    cdef unsigned char* dst
    for i in range(h):
        row = &m[i, 0]
        dst = &o[i, 0]
        if i == 0 or i == h - 1:
            # every foreground pixel on the top and bottom rows is boundary
            for j in range(w):
                dst[j] = row[j] != 0
            continue
        up = &m[i - 1, 0]
        down = &m[i + 1, 0]
        dst[0] = row[0] != 0
        dst[w - 1] = row[w - 1] != 0
        for j in range(1, w - 1):
            dst[j] = (row[j] != 0) & ((up[j] == 0) | (down[j] == 0) | (row[j - 1] == 0) | (row[j + 1] == 0))
    return out


cdef void _row_distance(const unsigned char* src, Py_ssize_t w, Py_ssize_t cap, Py_ssize_t* dist) noexcept nogil:
    # distance to the nearest foreground pixel in the row, capped at ``cap``
    cdef Py_ssize_t j, d = cap
    for j in range(w):
        if src[j]:
            d = 0
        elif d < cap:
            d += 1
        dist[j] = d
    d = cap
    for j in range(w - 1, -1, -1):
        if src[j]:
            d = 0
        elif d < cap:
            d += 1
        if d < dist[j]:
            dist[j] = d


def chebyshev_dilate(const unsigned char[:, ::1] m, Py_ssize_t r):
    cdef Py_ssize_t h = m.shape[0], w = m.shape[1], i, j, a, a0, a1
    out = np.zeros((h, w), dtype=np.uint8)
    if h == 0 or w == 0:
        return out
    # separable: horizontal distances per row, then an OR over nearby rows
    tmp = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] t = tmp
    cdef unsigned char[:, ::1] o = out
    cdef unsigned char* dst
    cdef const unsigned char* src
    dist_buf = np.empty(w, dtype=np.intp)
    cdef Py_ssize_t[::1] dist = dist_buf
    for i in range(h):
        _row_distance(&m[i, 0], w, r + 1, &dist[0])
        dst = &t[i, 0]
        for j in range(w):
            dst[j] = dist[j] <= r
    for i in range(h):
        a0 = i - r if i - r > 0 else 0
        a1 = i + r + 1 if i + r + 1 < h else h
        dst = &o[i, 0]
        for a in range(a0, a1):
            src = &t[a, 0]
            for j in range(w):
                dst[j] |= src[j]
    return out


def disk_dilate(const unsigned char[:, ::1] m, Py_ssize_t r):
    cdef Py_ssize_t h = m.shape[0], w = m.shape[1], i, j, di, a, hw
    out = np.zeros((h, w), dtype=np.uint8)
    if h == 0 or w == 0:
        return out
    cdef unsigned char[:, ::1] o = out
    cdef unsigned char* dst
    # half[di + r]: largest dj with di*di + dj*dj <= r*r
    half_buf = np.empty(2 * r + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] half = half_buf
    for di in range(-r, r + 1):
        hw = 0
        while (hw + 1) * (hw + 1) + di * di <= r * r:
            hw += 1
        half[di + r] = hw
    dist_buf = np.empty(w, dtype=np.intp)
    cdef Py_ssize_t[::1] dist = dist_buf
    cdef const unsigned char* src
    cdef bint any_set
    for i in range(h):
        src = &m[i, 0]
        any_set = 0
        for j in range(w):
            if src[j]:
                any_set = 1
                break
        if not any_set:
            continue
        _row_distance(src, w, r + 1, &dist[0])
        for di in range(-r, r + 1):
            a = i + di
            if a < 0 or a >= h:
                continue
            hw = half[di + r]
            dst = &o[a, 0]
            for j in range(w):
                dst[j] |= dist[j] <= hw
    return out
