"""Per-frame set prediction: the contract plus a synthetic prior-sensitive oracle.

``detect`` maps a frame view and a list of queries to one prediction per query.
The oracle stands in for the trained encoder/decoder. It is built so that the
propagated cues matter in the same directions they do for a trained model:

* Identity. Each query scores the visible objects by affinity, the mean of the
  expression-identity and content-identity dot products, plus uniform
  confusion noise. Learned content vectors are unrelated to any object, so
  first-frame queries rely on the expression alone.
* Spatial prior. A query's base box near an object raises that object's
  candidate score and shrinks the box noise (``prior_gain``).
* Position slot. The decoder only trusts the box prior to the extent that the
  query's position vector lies in the span of its learned position table.
* Evidence splitting. Queries locked onto the same object share its evidence,
  so their box noise grows with the square root of their number.

Masks are the locked object's true mask, dilated or eroded by the box error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from qprop import kernels
from qprop.geometry import MIN_SIZE, Box, Mask, box_iou
from qprop.losses import l1_box_loss
from qprop.propagation import QueryState, position_residual
from qprop.scenario import FrameView

PRESENCE_FLOOR = 0.25
SPATIAL_WEIGHT = 0.25
SCORE_EPS = 1e-6
CENTROID_MARGIN = 0.5


@dataclass(frozen=True, eq=False)
class Prediction:
    box: Box
    score: float
    mask: Mask
    output_embedding: np.ndarray
    position_passthrough: np.ndarray

    def same_as(self, other: "Prediction") -> bool:
        return (
            self.box == other.box
            and self.score == other.score
            and self.mask == other.mask
            and np.array_equal(self.output_embedding, other.output_embedding)
            and np.array_equal(self.position_passthrough, other.position_passthrough)
        )


@dataclass(frozen=True)
class OracleParams:
    score_sharpness: float = 10.0
    prior_gain: float = 0.7
    box_noise_sigma: float = 0.03
    distractor_confusion: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.score_sharpness <= 0:
            raise ValueError("score_sharpness must be > 0")
        if not 0 <= self.prior_gain <= 1:
            raise ValueError("prior_gain must lie in [0, 1]")
        if self.box_noise_sigma < 0:
            raise ValueError("box_noise_sigma must be >= 0")
        if not 0 <= self.distractor_confusion <= 1:
            raise ValueError("distractor_confusion must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "score_sharpness": self.score_sharpness,
            "prior_gain": self.prior_gain,
            "box_noise_sigma": self.box_noise_sigma,
            "distractor_confusion": self.distractor_confusion,
            "seed": self.seed,
        }


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def corrupt_mask(mask: Mask, radius: int, grow: bool) -> Mask:
    """Dilate (``grow``) or erode ``mask`` by a Euclidean disk of ``radius`` pixels."""
    if radius <= 0:
        return mask
    if grow:
        return Mask(kernels.disk_dilate(mask.bits, radius))
    background = 1 - mask.bits
    return Mask(1 - kernels.disk_dilate(background, radius))


def _fit_box(target: np.ndarray, true: Box) -> np.ndarray:
    w = min(max(target[2], MIN_SIZE), 1.0)
    h = min(max(target[3], MIN_SIZE), 1.0)
    # the decoded box always covers the centre of the object it locked onto
    cx = min(max(target[0], true.cx - w / 2), true.cx + w / 2)
    cy = min(max(target[1], true.cy - h / 2), true.cy + h / 2)
    return np.array([min(max(cx, 0.0), 1.0), min(max(cy, 0.0), 1.0), w, h])


def _cover_centroid(box: Box, mask: Mask) -> Box:
    if mask.is_empty:
        return box
    mx, my = mask.centroid()
    mx /= mask.width
    my /= mask.height
    cx = min(max(box.cx, mx - CENTROID_MARGIN * box.w), mx + CENTROID_MARGIN * box.w)
    cy = min(max(box.cy, my - CENTROID_MARGIN * box.h), my + CENTROID_MARGIN * box.h)
    return Box(min(max(cx, 0.0), 1.0), min(max(cy, 0.0), 1.0), box.w, box.h)


def detect(frame: FrameView, queries: Sequence[QueryState], params: OracleParams) -> list[Prediction]:
    """One prediction per query for a single frame."""
    if len(queries) == 0:
        raise ValueError("detect needs at least one query")
    objects = frame.objects
    expression = _unit(np.asarray(frame.expression, dtype=float))
    text_aff = np.array([expression @ o.identity for o in objects])
    visible = np.array([o.visible for o in objects], dtype=bool)
    delta = params.distractor_confusion

    locks: list[int | None] = []
    evidence: list[float] = []
    trust: list[float] = []
    rngs = []
    for slot, q in enumerate(queries):
        rng = np.random.default_rng([params.seed, frame.frame_index, slot, 7])
        rngs.append(rng)
        confusion = rng.uniform(-1.0, 1.0, size=len(objects))
        t = 1.0 - position_residual(q.position)
        trust.append(t)
        content = _unit(q.content)
        best, best_score = None, -np.inf
        for k, obj in enumerate(objects):
            if not visible[k]:
                continue
            aff = 0.5 * (text_aff[k] + content @ obj.identity)
            prior = params.prior_gain * box_iou(q.base_box, obj.box) * t
            s = aff + delta * confusion[k] + SPATIAL_WEIGHT * prior
            if s > best_score:
                best, best_score = k, s
                best_evidence = aff + delta * confusion[k]
        if best is None:
            best_evidence = 0.0
        evidence.append(best_evidence)
        locks.append(best if best is not None and best_evidence >= PRESENCE_FLOOR else None)

    crowd = {k: locks.count(k) for k in set(locks) if k is not None}
    preds = []
    for slot, q in enumerate(queries):
        score = _sigmoid(params.score_sharpness * (evidence[slot] - PRESENCE_FLOOR))
        score = min(max(score, SCORE_EPS), 1 - SCORE_EPS)
        eps = rngs[slot].standard_normal(4)
        k = locks[slot]
        if k is None:
            preds.append(Prediction(
                q.base_box, score, Mask.zeros(frame.width, frame.height),
                np.array(q.content, dtype=float, copy=True), q.position,
            ))
            continue
        obj = objects[k]
        true = obj.box
        gain = params.prior_gain * box_iou(q.base_box, true) * trust[slot]
        noise = params.box_noise_sigma * _crowd_factor(crowd[k]) * (1.0 - gain) * eps
        # base + offset with offset = target - base; built from target directly so
        # a zero offset error reproduces the true box bit-exactly
        box = Box(*(float(v) for v in _fit_box(true.as_array() + noise, true)))
        err = l1_box_loss(box, true)
        radius = int(round(err * min(frame.width, frame.height)))
        grow = box.w + box.h >= true.w + true.h
        mask = corrupt_mask(obj.mask, radius, grow)
        box = _cover_centroid(box, mask)
        preds.append(Prediction(box, score, mask, np.array(obj.identity, dtype=float, copy=True), q.position))
    return preds


CROWD_EXP = 0.5


def _crowd_factor(m: int) -> float:
    return m**CROWD_EXP
