"""Loss terms of the matching cost and their weighted combination.

The matching cost for one prediction against the referent's ground truth is

    lambda_cls * L_cls + lambda_box * (L1 + GIoU) + lambda_mask * (DICE + mask focal)

with a single "referent present" class. Ground truth that is not visible in a
frame contributes only the negative classification term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from qprop.errors import EmptyBox, InvalidProbability, ShapeMismatch
from qprop.geometry import Box, Mask, box_giou

if TYPE_CHECKING:
    from qprop.detector import Prediction
    from qprop.scenario import ObjectTruth

PROB_EPS = 1e-7
TERMS = ("cls", "l1", "giou", "dice", "mask_focal")


@dataclass(frozen=True)
class MatchCostWeights:
    lambda_cls: float = 2.0
    lambda_box: float = 5.0
    lambda_mask: float = 2.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    dice_eps: float = 1.0

    def __post_init__(self):
        for name in ("lambda_cls", "lambda_box", "lambda_mask"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 < self.focal_alpha < 1:
            raise ValueError("focal_alpha must lie in (0, 1)")
        if self.focal_gamma < 0:
            raise ValueError("focal_gamma must be >= 0")
        if self.dice_eps <= 0:
            raise ValueError("dice_eps must be > 0")

    def scaled(self, c: float) -> "MatchCostWeights":
        return MatchCostWeights(
            self.lambda_cls * c,
            self.lambda_box * c,
            self.lambda_mask * c,
            self.focal_alpha,
            self.focal_gamma,
            self.dice_eps,
        )


def _clamp_prob(p):
    if np.any(np.isnan(p)) or np.any(np.asarray(p) < 0) or np.any(np.asarray(p) > 1):
        raise InvalidProbability(f"probability outside [0, 1]: {p!r}")
    return np.clip(p, PROB_EPS, 1 - PROB_EPS)


def focal_loss(p: float, is_positive: bool, alpha: float = 0.25, gamma: float = 2.0) -> float:
    """Binary focal loss of a single probability.

    Positive: ``-alpha (1-p)^gamma log p``; negative: ``-(1-alpha) p^gamma log(1-p)``.
    """
    p = float(_clamp_prob(p))
    if is_positive:
        return -alpha * (1 - p) ** gamma * math.log(p)
    return -(1 - alpha) * p**gamma * math.log(1 - p)


def l1_box_loss(a: Box, b: Box) -> float:
    if a.is_empty or b.is_empty:
        raise EmptyBox("l1_box_loss requires non-empty boxes")
    return abs(a.cx - b.cx) + abs(a.cy - b.cy) + abs(a.w - b.w) + abs(a.h - b.h)


def giou_loss(a: Box, b: Box) -> float:
    return 1.0 - box_giou(a, b)


def giou_loss_grad(a: Box, b: Box) -> np.ndarray:
    """Analytic gradient of ``giou_loss(a, b)`` w.r.t. ``(cx, cy, w, h)`` of ``a``.

    Valid away from the kinks where two box edges coincide.
    """
    if a.is_empty or b.is_empty:
        raise EmptyBox("giou_loss_grad requires non-empty boxes")
    ax0, ay0, ax1, ay1 = a.corners()
    bx0, by0, bx1, by1 = b.corners()

    def axis(lo, hi, blo, bhi):
        # overlap length and hull length with their partials w.r.t. (lo, hi)
        ov = min(hi, bhi) - max(lo, blo)
        if ov > 0:
            d_ov = (-1.0 if lo > blo else 0.0, 1.0 if hi < bhi else 0.0)
        else:
            ov, d_ov = 0.0, (0.0, 0.0)
        hull = max(hi, bhi) - min(lo, blo)
        d_hull = (-1.0 if lo < blo else 0.0, 1.0 if hi > bhi else 0.0)
        return ov, d_ov, hull, d_hull

    iw, d_iw, cw, d_cw = axis(ax0, ax1, bx0, bx1)
    ih, d_ih, ch, d_ch = axis(ay0, ay1, by0, by1)
    aw, ah = ax1 - ax0, ay1 - ay0
    inter = iw * ih
    union = aw * ah + (bx1 - bx0) * (by1 - by0) - inter
    hull = cw * ch

    # partials of (inter, union, hull) w.r.t. (x0, x1, y0, y1) of a
    d_area = (-ah, ah, -aw, aw)
    d_inter = (d_iw[0] * ih, d_iw[1] * ih, iw * d_ih[0], iw * d_ih[1])
    d_hull = (d_cw[0] * ch, d_cw[1] * ch, cw * d_ch[0], cw * d_ch[1])
    grads = []
    for k in range(4):
        d_union = d_area[k] - d_inter[k]
        # giou = inter/union - 1 + union/hull
        d_giou = (
            (d_inter[k] * union - inter * d_union) / union**2
            + (d_union * hull - union * d_hull[k]) / hull**2
        )
        grads.append(-d_giou)
    gx0, gx1, gy0, gy1 = grads
    return np.array([gx0 + gx1, gy0 + gy1, (gx1 - gx0) / 2, (gy1 - gy0) / 2])


def _grid(pred) -> np.ndarray:
    if isinstance(pred, Mask):
        return pred.bits.astype(float)
    return np.asarray(pred, dtype=float)


def dice_loss(pred, gt: Mask, eps: float = 1.0) -> float:
    """``1 - (2 sum(p g) + eps) / (sum p + sum g + eps)`` over a binary or soft grid."""
    p = _grid(pred)
    if p.shape != gt.shape:
        raise ShapeMismatch(f"dice_loss shapes differ: {p.shape} vs {gt.shape}")
    g = gt.bits.astype(float)
    return 1.0 - (2.0 * float((p * g).sum()) + eps) / (float(p.sum()) + float(g.sum()) + eps)


def mask_focal_loss(pred, gt: Mask, alpha: float = 0.25, gamma: float = 2.0) -> float:
    """Per-pixel focal loss averaged over the grid."""
    p = _grid(pred)
    if p.shape != gt.shape:
        raise ShapeMismatch(f"mask_focal_loss shapes differ: {p.shape} vs {gt.shape}")
    p = _clamp_prob(p)
    pos = gt.bits != 0
    loss = np.where(
        pos,
        -alpha * (1 - p) ** gamma * np.log(p),
        -(1 - alpha) * p**gamma * np.log(1 - p),
    )
    return float(loss.mean())


def combine(terms: dict[str, float], w: MatchCostWeights) -> float:
    """Weighted sum of the raw per-term losses."""
    return (
        w.lambda_cls * terms["cls"]
        + w.lambda_box * (terms["l1"] + terms["giou"])
        + w.lambda_mask * (terms["dice"] + terms["mask_focal"])
    )


def cost_terms(pred: "Prediction", gt: "ObjectTruth", w: MatchCostWeights) -> dict[str, float]:
    """Raw (unweighted) loss terms; geometry terms are zero for invisible truth."""
    if not gt.visible:
        return {
            "cls": focal_loss(pred.score, False, w.focal_alpha, w.focal_gamma),
            "l1": 0.0,
            "giou": 0.0,
            "dice": 0.0,
            "mask_focal": 0.0,
        }
    return {
        "cls": focal_loss(pred.score, True, w.focal_alpha, w.focal_gamma),
        "l1": l1_box_loss(pred.box, gt.box),
        "giou": giou_loss(pred.box, gt.box),
        "dice": dice_loss(pred.mask, gt.mask, w.dice_eps),
        "mask_focal": mask_focal_loss(pred.mask, gt.mask, w.focal_alpha, w.focal_gamma),
    }


def matching_cost(pred: "Prediction", gt, w: MatchCostWeights | None = None) -> float:
    """Matching cost of one prediction against the referent truth.

    ``gt`` is either an ``ObjectTruth`` or a ``FrameTruth`` (its referent is used).
    """
    w = w or MatchCostWeights()
    return combine(cost_terms(pred, referent_truth(gt), w), w)


def referent_truth(gt) -> "ObjectTruth":
    return gt.referent if hasattr(gt, "referent") else gt
