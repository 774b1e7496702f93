"""Independent reference implementations used as test oracles.

Everything here is written from the definitions with plain Python loops and
shares no code with the package beyond the data types.
"""

from __future__ import annotations

import math

import numpy as np


# -- boxes -------------------------------------------------------------------


def corners(b):
    return (b.cx - b.w / 2, b.cy - b.h / 2, b.cx + b.w / 2, b.cy + b.h / 2)


def iou_box(a, b):
    if a.w == 0 or b.w == 0:
        return 0.0
    ax0, ay0, ax1, ay1 = corners(a)
    bx0, by0, bx1, by1 = corners(b)
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    return inter / (a.w * a.h + b.w * b.h - inter)


def giou_box(a, b):
    ax0, ay0, ax1, ay1 = corners(a)
    bx0, by0, bx1, by1 = corners(b)
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    hull = (max(ax1, bx1) - min(ax0, bx0)) * (max(ay1, by1) - min(ay0, by0))
    return inter / union - (hull - union) / hull


# -- masks -------------------------------------------------------------------


def iou_mask(a, b):
    """Per-pixel double loop."""
    h, w = a.shape
    inter = union = 0
    for i in range(h):
        for j in range(w):
            x, y = int(a[i, j]), int(b[i, j])
            inter += x & y
            union += x | y
    return 1.0 if union == 0 else inter / union


def rle_runs(bits):
    """Alternating run lengths starting with zeros, from a flat row-major walk."""
    flat = [int(v) for v in np.asarray(bits).ravel()]
    runs, cur, n = [], 0, 0
    for v in flat:
        if v == cur:
            n += 1
        else:
            runs.append(n)
            cur, n = v, 1
    runs.append(n)
    return runs


def boundary_pixels(bits):
    """Foreground pixels with a 4-neighbour that is background or outside the frame."""
    h, w = bits.shape
    out = []
    for i in range(h):
        for j in range(w):
            if not bits[i, j]:
                continue
            for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                y, x = i + di, j + dj
                if not (0 <= y < h and 0 <= x < w) or not bits[y, x]:
                    out.append((i, j))
                    break
    return out


def boundary_f_allpairs(pred, gt, tol):
    """O(B^2) boundary F: a pixel matches if some opposite boundary pixel is within Chebyshev ``tol``."""
    pb, gb = boundary_pixels(pred), boundary_pixels(gt)
    if not pb and not gb:
        return 1.0
    if not pb or not gb:
        return 0.0

    def near(p, others):
        return any(max(abs(p[0] - q[0]), abs(p[1] - q[1])) <= tol for q in others)

    precision = sum(near(p, gb) for p in pb) / len(pb)
    recall = sum(near(g, pb) for g in gb) / len(gb)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def chebyshev_dilate(bits, r):
    h, w = bits.shape
    out = np.zeros_like(bits)
    for i in range(h):
        for j in range(w):
            if bits[i, j]:
                out[max(0, i - r): i + r + 1, max(0, j - r): j + r + 1] = 1
    return out


def disk_dilate(bits, r):
    h, w = bits.shape
    out = np.zeros_like(bits)
    for i in range(h):
        for j in range(w):
            if bits[i, j]:
                for di in range(-r, r + 1):
                    for dj in range(-r, r + 1):
                        if di * di + dj * dj <= r * r and 0 <= i + di < h and 0 <= j + dj < w:
                            out[i + di, j + dj] = 1
    return out


# -- losses ------------------------------------------------------------------


def focal(p, positive, alpha=0.25, gamma=2.0):
    p = min(max(p, 1e-7), 1 - 1e-7)
    if positive:
        return -alpha * (1 - p) ** gamma * math.log(p)
    return -(1 - alpha) * p**gamma * math.log(1 - p)


def dice(pred, gt, eps):
    p = np.asarray(pred, dtype=float).ravel().tolist()
    g = np.asarray(gt, dtype=float).ravel().tolist()
    inter = sum(a * b for a, b in zip(p, g))
    return 1 - (2 * inter + eps) / (sum(p) + sum(g) + eps)


def mask_focal(pred, gt, alpha=0.25, gamma=2.0):
    p = np.asarray(pred, dtype=float).ravel().tolist()
    g = np.asarray(gt).ravel().tolist()
    return sum(focal(a, bool(b), alpha, gamma) for a, b in zip(p, g)) / len(p)


def cost(pred, truth, lam=(2.0, 5.0, 2.0), alpha=0.25, gamma=2.0, eps=1.0):
    """Matching cost from first principles against an ``ObjectTruth``."""
    lc, lb, lm = lam
    if not truth.visible:
        return lc * focal(pred.score, False, alpha, gamma)
    a, b = pred.box, truth.box
    l1 = abs(a.cx - b.cx) + abs(a.cy - b.cy) + abs(a.w - b.w) + abs(a.h - b.h)
    box = l1 + (1 - giou_box(a, b))
    pm = pred.mask.bits
    gm = truth.mask.bits
    mask = dice(pm, gm, eps) + mask_focal(pm, gm, alpha, gamma)
    return lc * focal(pred.score, True, alpha, gamma) + lb * box + lm * mask


def exhaustive_argmin(values):
    """Lowest index among all minimisers, by scanning every candidate."""
    best = min(values)
    return min(i for i, v in enumerate(values) if v == best)


# -- metrics -----------------------------------------------------------------


def precision_at(ious, k):
    return sum(1 for v in ious if v > k) / len(ious)
