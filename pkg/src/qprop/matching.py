"""Positive-sample selection against ground truth.

There is exactly one referent, so selection is an argmin over the matching cost
rather than a general assignment problem. Ties go to the lowest index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from qprop.errors import NoPredictions, ShapeMismatch
from qprop.losses import TERMS, MatchCostWeights, combine, cost_terms, referent_truth


@dataclass(frozen=True)
class Assignment:
    positive_index: int
    cost: float
    per_term_costs: dict[str, float] = field(default_factory=dict)


def _argmin(costs: Sequence[float]) -> int:
    best = 0
    for i, c in enumerate(costs):
        if c < costs[best]:
            best = i
    return best


def best_match_frame(preds, gt, w: MatchCostWeights | None = None) -> Assignment:
    """Index of the prediction with the lowest matching cost in one frame."""
    if len(preds) == 0:
        raise NoPredictions("best_match_frame needs at least one prediction")
    w = w or MatchCostWeights()
    truth = referent_truth(gt)
    terms = [cost_terms(p, truth, w) for p in preds]
    costs = [combine(t, w) for t in terms]
    i = _argmin(costs)
    return Assignment(i, costs[i], terms[i])


def best_match_sequence(trajectories, gts, w: MatchCostWeights | None = None) -> Assignment:
    """Trajectory (row of an N x I grid) with the lowest frame-averaged cost."""
    n = len(trajectories)
    if n == 0:
        raise NoPredictions("best_match_sequence needs at least one trajectory")
    frames = len(gts)
    if frames < 1:
        raise ShapeMismatch("best_match_sequence needs at least one frame")
    for row in trajectories:
        if len(row) != frames:
            raise ShapeMismatch(f"trajectory length {len(row)} != {frames} frames")
    w = w or MatchCostWeights()
    truths = [referent_truth(g) for g in gts]

    costs, mean_terms = [], []
    for row in trajectories:
        per_frame = [cost_terms(p, t, w) for p, t in zip(row, truths)]
        costs.append(sum(combine(t, w) for t in per_frame) / frames)
        mean_terms.append({k: sum(t[k] for t in per_frame) / frames for k in TERMS})
    i = _argmin(costs)
    return Assignment(i, costs[i], mean_terms[i])
