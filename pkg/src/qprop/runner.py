"""Online and semi-online pipelines, and the ablation harness.

Online: detect -> select the top-scoring query -> record the truth-based match
-> propagate, frame by frame. Semi-online: the live query set is repeated over
every frame of a clip; only the top-scoring query of the clip's last frame is
handed to the next clip. The emitted mask per frame is always the top-scoring
prediction's mask; the truth-based assignment is recorded for analysis only.
"""

from __future__ import annotations

import hashlib
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from qprop.detector import OracleParams, Prediction, detect
from qprop.geometry import Mask, format_rle
from qprop.losses import MatchCostWeights
from qprop.matching import Assignment, best_match_frame, best_match_sequence
from qprop.metrics import MetricsReport, combine_reports, evaluate_video
from qprop.propagation import (
    LEARNED_SEED,
    Method,
    PropagationConfig,
    QueryState,
    init_queries,
    is_empty_query,
    make_transform,
    propagate,
    select_query,
)
from qprop.scenario import FrameTruth, ScenarioSpec, render_frame


class ScenarioTruth:
    """Frame-by-frame ground truth, rendered on request."""

    def __init__(self, spec: ScenarioSpec):
        self.spec = spec

    def __len__(self) -> int:
        return self.spec.num_frames

    def frame(self, t: int) -> FrameTruth:
        return render_frame(self.spec, t)


@dataclass(frozen=True, eq=False)
class FrameRecord:
    frame_index: int
    clip_index: int
    queries: tuple[QueryState, ...]
    predictions: tuple[Prediction, ...]
    selected: int
    assignment: Assignment
    empty: bool
    gt_mask: Mask

    @property
    def output(self) -> Prediction:
        return self.predictions[self.selected]


@dataclass(eq=False)
class RunTrace:
    scenario: str
    mode: str
    window: int
    seed: int
    config: dict
    frames: list[FrameRecord] = field(default_factory=list)
    handoffs: list[tuple[int, int]] = field(default_factory=list)

    def output_masks(self) -> list[Mask]:
        return [r.output.mask for r in self.frames]

    def gt_masks(self) -> list[Mask]:
        return [r.gt_mask for r in self.frames]

    def live_counts(self) -> list[int]:
        return [len(r.queries) for r in self.frames]

    def metrics(self, tolerance_px: int | None = None) -> MetricsReport:
        return evaluate_video(self.output_masks(), self.gt_masks(), tolerance_px)

    def fingerprint(self) -> str:
        """SHA-256 over every recorded value, bit-exact (mode/window excluded)."""
        h = hashlib.sha256()

        def put_floats(*vals):
            h.update(struct.pack(f"<{len(vals)}d", *vals))

        def put_array(a):
            h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())

        for r in self.frames:
            h.update(struct.pack("<qqq?", r.frame_index, len(r.queries), r.selected, r.empty))
            for q in r.queries:
                put_array(q.content)
                put_array(q.position)
                put_floats(q.base_box.cx, q.base_box.cy, q.base_box.w, q.base_box.h)
                h.update(q.origin.value.encode())
            for p in r.predictions:
                put_floats(p.score, p.box.cx, p.box.cy, p.box.w, p.box.h)
                h.update(p.mask.bits.tobytes())
                put_array(p.output_embedding)
                put_array(p.position_passthrough)
            a = r.assignment
            h.update(struct.pack("<q", a.positive_index))
            put_floats(a.cost, *(a.per_term_costs[k] for k in sorted(a.per_term_costs)))
        for frame, count in self.handoffs:
            h.update(struct.pack("<qq", frame, count))
        return h.hexdigest()

    def to_dict(self) -> dict:
        frames = []
        for r in self.frames:
            out = r.output
            frames.append({
                "frame": r.frame_index,
                "clip": r.clip_index,
                "live_queries": len(r.queries),
                "origins": [q.origin.value for q in r.queries],
                "scores": [p.score for p in r.predictions],
                "selected": r.selected,
                "empty_query": r.empty,
                "box": [out.box.cx, out.box.cy, out.box.w, out.box.h],
                "mask_rle": format_rle(out.mask),
                "assignment": {
                    "positive_index": r.assignment.positive_index,
                    "cost": r.assignment.cost,
                    "terms": dict(sorted(r.assignment.per_term_costs.items())),
                },
            })
        return {
            "scenario": self.scenario,
            "mode": self.mode,
            "window": self.window,
            "seed": self.seed,
            "config": self.config,
            "handoffs": [{"after_frame": f, "queries": c} for f, c in self.handoffs],
            "fingerprint": self.fingerprint(),
            "frames": frames,
        }


def _snapshot(spec, oracle, prop, window, weights) -> dict:
    return {
        "scenario": spec.name,
        "oracle": oracle.to_dict(),
        "propagation": prop.to_dict(),
        "window": window,
        "weights": {
            "lambda_cls": weights.lambda_cls,
            "lambda_box": weights.lambda_box,
            "lambda_mask": weights.lambda_mask,
            "focal_alpha": weights.focal_alpha,
            "focal_gamma": weights.focal_gamma,
            "dice_eps": weights.dice_eps,
        },
    }


def run_online(
    spec: ScenarioSpec,
    oracle: OracleParams,
    prop: PropagationConfig,
    *,
    truth=None,
    weights: MatchCostWeights | None = None,
) -> RunTrace:
    """Frame-by-frame inference with query propagation."""
    return _run(spec, oracle, prop, 1, truth, weights, mode="online")


def run_semi_online(
    spec: ScenarioSpec,
    oracle: OracleParams,
    prop: PropagationConfig,
    window: int,
    *,
    truth=None,
    weights: MatchCostWeights | None = None,
) -> RunTrace:
    """Clip-by-clip inference; ``window`` frames per clip, the last clip may be shorter."""
    if window < 1:
        raise ValueError("window must be >= 1")
    return _run(spec, oracle, prop, window, truth, weights, mode="semi-online")


def _run(spec, oracle, prop, window, truth, weights, mode) -> RunTrace:
    if prop.dim != spec.dim:
        raise ValueError(f"query dim {prop.dim} != scenario identity dim {spec.dim}")
    weights = weights or MatchCostWeights()
    truth = truth if truth is not None else ScenarioTruth(spec)
    tf = make_transform(prop.embed_transform, prop.dim, LEARNED_SEED)
    trace = RunTrace(spec.name, mode, window, oracle.seed, _snapshot(spec, oracle, prop, window, weights))

    states = init_queries(prop, LEARNED_SEED)
    n = spec.num_frames
    for clip, start in enumerate(range(0, n, window)):
        stop = min(start + window, n)
        frames = [truth.frame(t) for t in range(start, stop)]
        live = tuple(states)
        per_frame = [detect(f.view(), live, oracle) for f in frames]
        if len(frames) == 1:
            assignment = best_match_frame(per_frame[0], frames[0], weights)
        else:
            grid = [[preds[i] for preds in per_frame] for i in range(len(live))]
            assignment = best_match_sequence(grid, frames, weights)
        for f, preds in zip(frames, per_frame):
            sel = select_query(preds)
            trace.frames.append(FrameRecord(
                f.frame_index, clip, live, tuple(preds), sel, assignment,
                is_empty_query(preds[sel], prop.empty_threshold), f.referent.mask,
            ))
        if stop < n:
            states = propagate(per_frame[-1], live, prop, tf, LEARNED_SEED)
            handed = len(states) if prop.method is not Method.NO_PROPAGATION else 0
            trace.handoffs.append((stop - 1, handed))
    return trace


def run(spec, oracle, prop, window: int = 0, **kw) -> RunTrace:
    """``window == 0`` runs online, otherwise semi-online with that clip length."""
    if window == 0:
        return run_online(spec, oracle, prop, **kw)
    return run_semi_online(spec, oracle, prop, window, **kw)


# -- ablations ---------------------------------------------------------------


def default_axes(base: PropagationConfig | None = None) -> dict[str, list[tuple[str, PropagationConfig]]]:
    """Variant grids for the four ablation axes, rows in reporting order."""
    base = base or PropagationConfig()
    ours = base.with_(method=Method.OURS)
    return {
        "update_flags": [
            ("query=no,position=no", ours.with_(update_query=False, update_position=False)),
            ("query=yes,position=no", ours.with_(update_query=True, update_position=False)),
            ("query=yes,position=yes", ours.with_(update_query=True, update_position=True)),
        ],
        "method": [
            ("w/o propagation", base.with_(method=Method.NO_PROPAGATION, top_k=1)),
            ("concatenation", base.with_(method=Method.CONCATENATION, top_k=1)),
            ("fixed", base.with_(method=Method.FIXED, top_k=1)),
            ("ours", ours.with_(top_k=1)),
        ],
        "top_k": [(f"top-{k}", ours.with_(top_k=k)) for k in (4, 3, 2, 1)],
        "initial_queries": [
            (str(n), ours.with_(initial_queries=n, top_k=1)) for n in (1, 3, 5, 8)
        ],
    }


@dataclass
class AblationRow:
    variant: str
    config: PropagationConfig
    report: MetricsReport
    runs: int


def _run_job(job):
    spec, oracle, prop, window = job
    return run(spec, oracle, prop, window).metrics()


def ablation_suite(
    base_oracle: OracleParams,
    suites: dict[str, Sequence[ScenarioSpec]],
    grid: Sequence[tuple[str, PropagationConfig]],
    *,
    window: int = 0,
    oracle_seeds: Iterable[int] | None = None,
    workers: int = 1,
) -> list[AblationRow]:
    """Run every (variant x scenario) pair and average J&F per variant.

    Each scenario runs with the oracle seeded by the scenario's own seed unless
    ``oracle_seeds`` overrides it (then every scenario runs under every seed).
    """
    specs = [spec for name in sorted(suites) for spec in suites[name]]
    jobs, keys = [], []
    for label, cfg in grid:
        for spec in specs:
            seeds = list(oracle_seeds) if oracle_seeds is not None else [spec.seed]
            for s in seeds:
                jobs.append((spec, _with_seed(base_oracle, s), cfg, window))
                keys.append(label)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_job, jobs, chunksize=4))
    else:
        reports = [_run_job(j) for j in jobs]
    rows = []
    for label, cfg in grid:
        mine = [r for k, r in zip(keys, reports) if k == label]
        rows.append(AblationRow(label, cfg, combine_reports(mine), len(mine)))
    return rows


def _with_seed(oracle: OracleParams, seed: int) -> OracleParams:
    return OracleParams(
        oracle.score_sharpness, oracle.prior_gain, oracle.box_noise_sigma,
        oracle.distractor_confusion, int(seed),
    )
