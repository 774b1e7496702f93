"""Cross-frame query propagation.

A live query carries a content vector, a position vector and a base box. After
each frame the highest-scoring prediction is selected and its three cues are
carried into the next frame's query:

* base box      <- the selected prediction's box
* position      <- the previous position vector (unchanged by default)
* content       <- transform(selected output embedding)

The ablation variants (no propagation, concatenation with a fresh query set,
fixed in-place propagation of every query, top-k) share the same step.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import TYPE_CHECKING, Sequence

import numpy as np

from qprop.errors import NoPredictions, TopKTooLarge
from qprop.geometry import Box

if TYPE_CHECKING:
    from qprop.detector import Prediction

LEARNED_TABLE_SIZE = 16
LEARNED_SEED = 0
ANCHOR_SIZE = 0.4
EXTRA_ANCHOR_SIZE = 0.3


class Method(str, enum.Enum):
    OURS = "ours"
    CONCATENATION = "concatenation"
    FIXED = "fixed"
    NO_PROPAGATION = "no_propagation"


class Origin(str, enum.Enum):
    LEARNED = "learned"
    PROPAGATED = "propagated"


@dataclass(frozen=True, eq=False)
class QueryState:
    content: np.ndarray
    position: np.ndarray
    base_box: Box
    origin: Origin

    def __post_init__(self):
        if self.content.shape != self.position.shape or self.content.ndim != 1:
            raise ValueError("content and position must be vectors of equal dimension")

    @property
    def dim(self) -> int:
        return self.content.size

    def same_as(self, other: "QueryState") -> bool:
        return (
            self.origin == other.origin
            and self.base_box == other.base_box
            and np.array_equal(self.content, other.content)
            and np.array_equal(self.position, other.position)
        )


@dataclass(frozen=True)
class PropagationConfig:
    method: Method = Method.OURS
    top_k: int = 1
    update_query: bool = True
    update_position: bool = False
    initial_queries: int = 5
    embed_transform: str = "identity"
    dim: int = 256
    empty_threshold: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if not 1 <= self.initial_queries <= LEARNED_TABLE_SIZE:
            raise ValueError(f"initial_queries must lie in [1, {LEARNED_TABLE_SIZE}]")
        if self.method is Method.NO_PROPAGATION and self.top_k != 1:
            raise ValueError("no_propagation keeps the initial query set; top_k must stay 1")
        if self.dim < 8 or self.dim % 8:
            raise ValueError("dim must be a positive multiple of 8")
        if not 0 < self.empty_threshold < 1:
            raise ValueError("empty_threshold must lie in (0, 1)")
        if self.embed_transform not in TRANSFORMS:
            raise ValueError(f"unknown embed_transform {self.embed_transform!r}; have {sorted(TRANSFORMS)}")

    def with_(self, **changes) -> "PropagationConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "top_k": self.top_k,
            "update_query": self.update_query,
            "update_position": self.update_position,
            "initial_queries": self.initial_queries,
            "embed_transform": self.embed_transform,
            "dim": self.dim,
            "empty_threshold": self.empty_threshold,
        }


# -- content transform -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EmbedTransform:
    """Affine map applied to a selected output embedding to form the next content query."""

    name: str
    matrix: np.ndarray | None = None
    bias: np.ndarray | None = field(default=None)

    def __call__(self, v: np.ndarray) -> np.ndarray:
        out = np.array(v, dtype=float, copy=True)
        if self.matrix is not None:
            out = self.matrix @ out
        if self.bias is not None:
            out = out + self.bias
        return out


def _identity_transform(dim: int, seed: int) -> EmbedTransform:
    return EmbedTransform("identity")


def _affine_transform(dim: int, seed: int) -> EmbedTransform:
    # near-identity so the map stays injective and well conditioned
    rng = np.random.default_rng([seed, dim, 31])
    matrix = np.eye(dim) + 0.05 * rng.standard_normal((dim, dim)) / np.sqrt(dim)
    bias = 0.01 * rng.standard_normal(dim) / np.sqrt(dim)
    return EmbedTransform("affine", matrix, bias)


TRANSFORMS = {"identity": _identity_transform, "affine": _affine_transform}


def make_transform(name: str, dim: int = 256, seed: int = LEARNED_SEED) -> EmbedTransform:
    try:
        return TRANSFORMS[name](dim, seed)
    except KeyError:
        raise ValueError(f"unknown embed_transform {name!r}") from None


# -- position embeddings -----------------------------------------------------


def _frequencies(dim: int) -> np.ndarray:
    n = dim // 8
    if n == 1:
        return np.array([np.pi])
    return np.pi * 100.0 ** (np.arange(n) / (n - 1))


def encode_position(box: Box, dim: int = 256) -> np.ndarray:
    """Sinusoidal unit vector for a box; ``decode_position`` inverts it.

    Each coordinate gets ``dim / 8`` (sin, cos) pairs. The lowest frequency maps
    ``[0, 1]`` onto ``[0, pi]``, which keeps the inverse unique.
    """
    freqs = _frequencies(dim)
    parts = []
    for v in (box.cx, box.cy, box.w, box.h):
        ang = v * freqs
        parts.append(np.stack([np.sin(ang), np.cos(ang)], axis=1).ravel())
    vec = np.concatenate(parts)
    return vec / np.linalg.norm(vec)


def decode_position(vec: np.ndarray) -> Box:
    n = vec.size // 8
    coords = []
    for k in range(4):
        s, c = vec[k * 2 * n], vec[k * 2 * n + 1]
        ang = np.arctan2(s, c)
        coords.append(float(min(max(ang / np.pi, 0.0), 1.0)))
    return Box(*coords)


def _halton(i: int, base: int) -> float:
    f, r = 1.0, 0.0
    while i > 0:
        f /= base
        r += f * (i % base)
        i //= base
    return r


def anchor_boxes(n: int) -> list[Box]:
    """Centre + four quadrant centres, then Halton-spread anchors."""
    s = ANCHOR_SIZE
    anchors = [
        Box(0.5, 0.5, s, s),
        Box(0.25, 0.25, s, s),
        Box(0.75, 0.25, s, s),
        Box(0.25, 0.75, s, s),
        Box(0.75, 0.75, s, s),
    ]
    i = 1
    while len(anchors) < n:
        cx = 0.15 + 0.7 * _halton(i, 2)
        cy = 0.15 + 0.7 * _halton(i, 3)
        anchors.append(Box(cx, cy, EXTRA_ANCHOR_SIZE, EXTRA_ANCHOR_SIZE))
        i += 1
    return anchors[:n]


@lru_cache(maxsize=8)
def learned_position_basis(dim: int) -> np.ndarray:
    """Orthonormal basis (columns) spanning the learned position table."""
    table = np.stack([encode_position(b, dim) for b in anchor_boxes(LEARNED_TABLE_SIZE)], axis=1)
    q, _ = np.linalg.qr(table)
    q.flags.writeable = False
    return q


def position_residual(position: np.ndarray) -> float:
    """Fraction of ``position``'s norm lying outside the learned position table's span."""
    norm = np.linalg.norm(position)
    if norm == 0:
        return 1.0
    q = learned_position_basis(position.size)
    res = position - q @ (q.T @ position)
    return float(min(np.linalg.norm(res) / norm, 1.0))


# -- the step ----------------------------------------------------------------


def init_queries(config: PropagationConfig, seed: int = LEARNED_SEED) -> list[QueryState]:
    """The learned first-frame query set (``initial_queries`` states)."""
    states = []
    for slot, anchor in enumerate(anchor_boxes(config.initial_queries)):
        rng = np.random.default_rng([seed, slot, 11])
        content = rng.standard_normal(config.dim)
        content /= np.linalg.norm(content)
        position = encode_position(anchor, config.dim)
        states.append(QueryState(content, position, decode_position(position), Origin.LEARNED))
    return states


def select_query(preds: Sequence["Prediction"]) -> int:
    """Index of the highest class score; ties go to the lowest index."""
    if len(preds) == 0:
        raise NoPredictions("select_query needs at least one prediction")
    best = 0
    for i, p in enumerate(preds):
        if p.score > preds[best].score:
            best = i
    return best


def select_top_k(preds: Sequence["Prediction"], k: int) -> list[int]:
    if len(preds) == 0:
        raise NoPredictions("select_top_k needs at least one prediction")
    if k > len(preds):
        raise TopKTooLarge(f"top_k={k} exceeds {len(preds)} predictions")
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    return order[:k]


def is_empty_query(p: "Prediction", threshold: float = 0.5) -> bool:
    """True when the prediction's score says no referent was found."""
    return p.score < threshold


def propagate_query(
    pred: "Prediction", prev: QueryState, cfg: PropagationConfig, tf: EmbedTransform
) -> QueryState:
    """Carry one prediction's cues into the next frame's query."""
    content = tf(pred.output_embedding) if cfg.update_query else prev.content
    if cfg.update_position:
        position = encode_position(pred.box, prev.dim)
    else:
        position = prev.position
    return QueryState(
        np.array(content, dtype=float, copy=True),
        np.array(position, dtype=float, copy=True),
        pred.box,
        Origin.PROPAGATED,
    )


def propagate(
    preds: Sequence["Prediction"],
    states: Sequence[QueryState],
    cfg: PropagationConfig,
    tf: EmbedTransform | None = None,
    seed: int = LEARNED_SEED,
) -> list[QueryState]:
    """Next frame's live query set from this frame's predictions.

    ``preds[i]`` must have been produced by ``states[i]``. Ground truth is never
    an input.
    """
    if len(preds) != len(states):
        raise ValueError("preds and states must align one-to-one")
    if len(preds) == 0:
        raise NoPredictions("propagate needs at least one prediction")
    tf = tf or make_transform(cfg.embed_transform, cfg.dim, seed)
    method = cfg.method
    if method is Method.NO_PROPAGATION:
        return init_queries(cfg, seed)
    if method is Method.FIXED:
        return [propagate_query(p, s, cfg, tf) for p, s in zip(preds, states)]
    picked = [propagate_query(preds[i], states[i], cfg, tf) for i in select_top_k(preds, cfg.top_k)]
    if method is Method.CONCATENATION:
        return picked + init_queries(cfg, seed)
    return picked
