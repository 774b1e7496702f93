"""Region similarity J, boundary F, J&F, and the dataset-level IoU statistics.

Conventions: an empty prediction on an empty ground truth scores 1 for both J
and F; empty against non-empty scores 0. Video-level J and F are means over all
frames. Precision@K counts samples with IoU strictly greater than K.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from qprop import kernels
from qprop.errors import NoSamples, ShapeMismatch
from qprop.geometry import Mask, mask_iou

PRECISION_THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass
class MetricsReport:
    j_mean: float
    f_mean: float
    jf_mean: float
    per_frame_j: list[float]
    per_frame_f: list[float]
    overall_iou: float
    mean_iou: float
    precision_at: dict[float, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "j_mean": self.j_mean,
            "f_mean": self.f_mean,
            "jf_mean": self.jf_mean,
            "per_frame_j": list(self.per_frame_j),
            "per_frame_f": list(self.per_frame_f),
            "overall_iou": self.overall_iou,
            "mean_iou": self.mean_iou,
            "precision_at": {f"{k:.1f}": v for k, v in sorted(self.precision_at.items())},
        }


def region_similarity(pred: Mask, gt: Mask) -> float:
    return mask_iou(pred, gt)


def default_tolerance(width: int, height: int) -> int:
    """Boundary tolerance in pixels: ``ceil(0.008 * diagonal)``."""
    return max(1, math.ceil(0.008 * math.hypot(width, height)))


def boundary_f(pred: Mask, gt: Mask, tolerance_px: int | None = None) -> float:
    """Boundary F-measure with a Chebyshev pixel tolerance.

    Boundaries are foreground pixels with a 4-neighbour outside the mask. A
    boundary pixel counts as matched when some boundary pixel of the other mask
    lies within ``tolerance_px`` (inclusive).
    """
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"boundary_f shapes differ: {pred.shape} vs {gt.shape}")
    if tolerance_px is None:
        tolerance_px = default_tolerance(gt.width, gt.height)
    if tolerance_px < 1:
        raise ValueError("tolerance_px must be a positive integer")
    pb = kernels.boundary_map(pred.bits)
    gb = kernels.boundary_map(gt.bits)
    n_pred = int(np.count_nonzero(pb))
    n_gt = int(np.count_nonzero(gb))
    if n_pred == 0 and n_gt == 0:
        return 1.0
    if n_pred == 0 or n_gt == 0:
        return 0.0
    gt_zone = kernels.chebyshev_dilate(gb, tolerance_px)
    pred_zone = kernels.chebyshev_dilate(pb, tolerance_px)
    precision = np.count_nonzero(pb & gt_zone) / n_pred
    recall = np.count_nonzero(gb & pred_zone) / n_gt
    if precision + recall == 0:
        return 0.0
    return float(2 * precision * recall / (precision + recall))


def dataset_aggregates(samples: Sequence[tuple[Mask, Mask]]):
    """``(overall_iou, mean_iou, precision_at)`` over ``(pred, gt)`` samples."""
    if len(samples) == 0:
        raise NoSamples("dataset_aggregates needs at least one sample")
    total_i = total_u = 0
    ious = []
    for pred, gt in samples:
        if pred.shape != gt.shape:
            raise ShapeMismatch(f"sample shapes differ: {pred.shape} vs {gt.shape}")
        i, u = kernels.inter_union(pred.bits, gt.bits)
        total_i += i
        total_u += u
        ious.append(1.0 if u == 0 else i / u)
    overall = 1.0 if total_u == 0 else total_i / total_u
    mean = float(np.mean(ious))
    precision = {k: sum(v > k for v in ious) / len(ious) for k in PRECISION_THRESHOLDS}
    return overall, mean, precision


def evaluate_video(preds: Sequence[Mask], gts: Sequence[Mask], tolerance_px: int | None = None) -> MetricsReport:
    """Per-frame J and F plus aggregates for one video."""
    if len(preds) != len(gts):
        raise ShapeMismatch(f"{len(preds)} predicted frames vs {len(gts)} ground-truth frames")
    if not gts:
        raise NoSamples("evaluate_video needs at least one frame")
    js = [region_similarity(p, g) for p, g in zip(preds, gts)]
    fs = [boundary_f(p, g, tolerance_px) for p, g in zip(preds, gts)]
    overall, mean, precision = dataset_aggregates(list(zip(preds, gts)))
    j = float(np.mean(js))
    f = float(np.mean(fs))
    return MetricsReport(j, f, (j + f) / 2, js, fs, overall, mean, precision)


def combine_reports(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Average video-level reports (each video weighted equally).

    Per-frame curves are averaged index-wise over the videos long enough to
    have that frame; precision and IoU statistics are averaged as well.
    """
    if not reports:
        raise NoSamples("combine_reports needs at least one report")
    j = float(np.mean([r.j_mean for r in reports]))
    f = float(np.mean([r.f_mean for r in reports]))
    longest = max(len(r.per_frame_j) for r in reports)
    curve_j, curve_f = [], []
    for t in range(longest):
        have = [r for r in reports if len(r.per_frame_j) > t]
        curve_j.append(float(np.mean([r.per_frame_j[t] for r in have])))
        curve_f.append(float(np.mean([r.per_frame_f[t] for r in have])))
    precision = {
        k: float(np.mean([r.precision_at[k] for r in reports])) for k in PRECISION_THRESHOLDS
    }
    return MetricsReport(
        j, f, (j + f) / 2, curve_j, curve_f,
        float(np.mean([r.overall_iou for r in reports])),
        float(np.mean([r.mean_iou for r in reports])),
        precision,
    )
