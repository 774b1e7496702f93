"""Deterministic synthetic videos with a designated referent.

A scenario scripts a handful of objects (rectangles or ellipses) moving along
keyframed trajectories, each with visibility intervals and an identity vector.
The referring expression is modelled as the referent's identity vector: the
detector sees it, but never the referent id.

Masks are rasterized with half-open pixel-centre tests, and boxes are the tight
bounds of the rasterized masks.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from os import PathLike
from pathlib import Path
from typing import Sequence

import numpy as np

from qprop import _yaml
from qprop.errors import BadScript
from qprop.geometry import Box, Mask, tight_box

SHAPES = ("rectangle", "ellipse")
FAMILIES = ("occlusion", "entrance", "distractors", "scale-change")


@dataclass(frozen=True)
class Keyframe:
    frame: int
    cx: float
    cy: float
    w: float
    h: float


@dataclass(frozen=True, eq=False)
class ObjectScript:
    id: str
    shape: str
    keyframes: tuple[Keyframe, ...]
    visible_intervals: tuple[tuple[int, int], ...]
    identity: np.ndarray

    def state_at(self, t: int) -> tuple[float, float, float, float]:
        """Linearly interpolated ``(cx, cy, w, h)``; held constant outside the keyframes."""
        kfs = self.keyframes
        if t <= kfs[0].frame:
            k = kfs[0]
            return k.cx, k.cy, k.w, k.h
        if t >= kfs[-1].frame:
            k = kfs[-1]
            return k.cx, k.cy, k.w, k.h
        for a, b in zip(kfs, kfs[1:]):
            if a.frame <= t <= b.frame:
                s = (t - a.frame) / (b.frame - a.frame)
                return (
                    a.cx + s * (b.cx - a.cx),
                    a.cy + s * (b.cy - a.cy),
                    a.w + s * (b.w - a.w),
                    a.h + s * (b.h - a.h),
                )
        raise AssertionError("unreachable")

    def in_interval(self, t: int) -> bool:
        return any(start <= t < end for start, end in self.visible_intervals)


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    width: int
    height: int
    num_frames: int
    objects: tuple[ObjectScript, ...]
    referent_id: str
    seed: int = 0
    dim: int = 256
    name: str = "scenario"

    def __post_init__(self):
        validate(self)

    def object(self, object_id: str) -> ObjectScript:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(object_id)

    @property
    def expression(self) -> np.ndarray:
        return self.object(self.referent_id).identity


@dataclass(frozen=True, eq=False)
class ObjectTruth:
    object_id: str
    box: Box
    mask: Mask
    visible: bool
    identity: np.ndarray


@dataclass(frozen=True, eq=False)
class FrameView:
    """What the detector may see: pixels (object layout) and the expression."""

    frame_index: int
    width: int
    height: int
    objects: tuple[ObjectTruth, ...]
    expression: np.ndarray


@dataclass(frozen=True, eq=False)
class FrameTruth:
    frame_index: int
    width: int
    height: int
    objects: tuple[ObjectTruth, ...]
    referent_id: str
    expression: np.ndarray = field(repr=False)

    @property
    def referent(self) -> ObjectTruth:
        for obj in self.objects:
            if obj.object_id == self.referent_id:
                return obj
        raise KeyError(self.referent_id)

    @property
    def referent_visible(self) -> bool:
        return self.referent.visible

    def view(self) -> FrameView:
        return FrameView(self.frame_index, self.width, self.height, self.objects, self.expression)

    def same_as(self, other: "FrameTruth") -> bool:
        if (self.frame_index, self.width, self.height, self.referent_id) != (
            other.frame_index, other.width, other.height, other.referent_id
        ) or len(self.objects) != len(other.objects):
            return False
        return all(
            a.object_id == b.object_id and a.box == b.box and a.mask == b.mask
            and a.visible == b.visible and np.array_equal(a.identity, b.identity)
            for a, b in zip(self.objects, other.objects)
        )


# -- validation --------------------------------------------------------------


def validate(spec: ScenarioSpec) -> None:
    if spec.width < 1 or spec.height < 1:
        raise BadScript("frame dimensions must be positive")
    if spec.num_frames < 1:
        raise BadScript("num_frames must be >= 1")
    if spec.dim < 1:
        raise BadScript("identity dimension must be >= 1")
    ids = [o.id for o in spec.objects]
    if len(set(ids)) != len(ids):
        raise BadScript(f"duplicate object ids in {ids}")
    if spec.referent_id not in ids:
        raise BadScript(f"referent_id {spec.referent_id!r} names no object")
    for obj in spec.objects:
        _validate_object(obj, spec.dim)


def _validate_object(obj: ObjectScript, dim: int) -> None:
    if obj.shape not in SHAPES:
        raise BadScript(f"object {obj.id}: unknown shape {obj.shape!r}")
    if not obj.keyframes:
        raise BadScript(f"object {obj.id}: no keyframes")
    frames = [k.frame for k in obj.keyframes]
    if any(b <= a for a, b in zip(frames, frames[1:])):
        raise BadScript(f"object {obj.id}: keyframes must be strictly increasing, got {frames}")
    for k in obj.keyframes:
        if not (k.w > 0 and k.h > 0):
            raise BadScript(f"object {obj.id}: non-positive size at frame {k.frame}")
        if not all(np.isfinite([k.cx, k.cy, k.w, k.h])):
            raise BadScript(f"object {obj.id}: non-finite keyframe at frame {k.frame}")
    prev_end = None
    for start, end in obj.visible_intervals:
        if end <= start:
            raise BadScript(f"object {obj.id}: empty interval [{start}, {end})")
        if prev_end is not None and start < prev_end:
            raise BadScript(f"object {obj.id}: visibility intervals overlap or are unsorted")
        prev_end = end
    if obj.identity.shape != (dim,):
        raise BadScript(f"object {obj.id}: identity has shape {obj.identity.shape}, expected ({dim},)")


# -- identities --------------------------------------------------------------


def _key(*parts) -> int:
    return zlib.crc32("/".join(str(p) for p in parts).encode())


def identity_vector(seed: int, key: str, dim: int = 256) -> np.ndarray:
    rng = np.random.default_rng([int(seed), _key(key)])
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def similar_identity(base: np.ndarray, similarity: float, seed: int, key: str) -> np.ndarray:
    """Unit vector with cosine ``similarity`` to ``base``."""
    if not -1 <= similarity <= 1:
        raise BadScript("similarity must lie in [-1, 1]")
    noise = identity_vector(seed, key, base.size)
    noise = noise - (noise @ base) * base
    noise /= np.linalg.norm(noise)
    v = similarity * base + np.sqrt(1 - similarity**2) * noise
    return v / np.linalg.norm(v)


# -- rendering ---------------------------------------------------------------


def rasterize(shape: str, cx: float, cy: float, w: float, h: float, width: int, height: int) -> Mask:
    """Pixel-centre rasterization of a normalized shape."""
    px = np.arange(width) + 0.5
    py = (np.arange(height) + 0.5)[:, None]
    ccx, ccy = cx * width, cy * height
    hw, hh = w * width / 2, h * height / 2
    if shape == "rectangle":
        bits = (px >= ccx - hw) & (px < ccx + hw) & (py >= ccy - hh) & (py < ccy + hh)
    elif shape == "ellipse":
        bits = (px - ccx) ** 2 * hh**2 + (py - ccy) ** 2 * hw**2 < hw**2 * hh**2
    else:
        raise BadScript(f"unknown shape {shape!r}")
    return Mask(bits)


def render_frame(spec: ScenarioSpec, t: int) -> FrameTruth:
    if not 0 <= t < spec.num_frames:
        raise IndexError(f"frame {t} outside [0, {spec.num_frames})")
    objects = []
    for obj in spec.objects:
        mask = Mask.zeros(spec.width, spec.height)
        if obj.in_interval(t):
            mask = rasterize(obj.shape, *obj.state_at(t), spec.width, spec.height)
        visible = not mask.is_empty
        objects.append(ObjectTruth(obj.id, tight_box(mask), mask, visible, obj.identity))
    return FrameTruth(t, spec.width, spec.height, tuple(objects), spec.referent_id, spec.expression)


def generate(spec: ScenarioSpec) -> list[FrameTruth]:
    return [render_frame(spec, t) for t in range(spec.num_frames)]


# -- builtin families --------------------------------------------------------

_W = _H = 64
_T = 12


def _obj(id_, shape, start, end, identity, intervals=None, mid=None) -> ObjectScript:
    kfs = [Keyframe(0, *start)]
    if mid is not None:
        kfs.append(Keyframe(mid[0], *mid[1]))
    kfs.append(Keyframe(_T - 1, *end))
    return ObjectScript(id_, shape, tuple(kfs), tuple(intervals or [(0, _T)]), identity)


def _lane_track(rng, y_lo, y_hi, size):
    """A left-to-right (or reversed) track inside a horizontal lane."""
    y0, y1 = rng.uniform(y_lo, y_hi, size=2)
    x0, x1 = rng.uniform(0.2, 0.35), rng.uniform(0.65, 0.8)
    if rng.random() < 0.5:
        x0, x1 = x1, x0
    return (x0, y0, size, size), (x1, y1, size, size)


def make_scenario(family: str, seed: int) -> ScenarioSpec:
    """One seeded instance of a builtin scenario family."""
    rng = np.random.default_rng([int(seed), _key(family)])
    shapes = rng.choice(SHAPES, size=4)
    ident = lambda key: identity_vector(seed, f"{family}/{key}")  # noqa: E731
    size = rng.uniform(0.28, 0.36)

    if family == "occlusion":
        start, end = _lane_track(rng, 0.25, 0.35, size)
        hide = int(rng.integers(3, 6))
        length = int(rng.integers(2, 4))
        ref = _obj("ref", shapes[0], start, end, ident("ref"), [(0, hide), (hide + length, _T)])
        o_start, o_end = _lane_track(rng, 0.7, 0.8, size * 0.8)
        other = _obj("other", shapes[1], o_start, o_end, ident("other"))
        objects = (ref, other)
    elif family == "entrance":
        start, end = _lane_track(rng, 0.25, 0.4, size)
        enter = int(rng.integers(2, 5))
        ref = _obj("ref", shapes[0], start, end, ident("ref"), [(enter, _T)])
        o_start, o_end = _lane_track(rng, 0.7, 0.8, size * 0.8)
        other = _obj("other", shapes[1], o_start, o_end, ident("other"))
        objects = (ref, other)
    elif family == "distractors":
        lanes = [(0.18, 0.26), (0.45, 0.55), (0.74, 0.82)]
        order = rng.permutation(3)
        ref_identity = ident("ref")
        objects = []
        for k, lane in enumerate(order):
            start, end = _lane_track(rng, *lanes[lane], size * 0.85)
            if k == 0:
                objects.append(_obj("ref", shapes[0], start, end, ref_identity))
            else:
                sim = similar_identity(ref_identity, 0.97, seed, f"{family}/d{k}")
                objects.append(_obj(f"d{k}", shapes[k], start, end, sim))
        objects = tuple(objects)
    elif family == "scale-change":
        small, large = rng.uniform(0.12, 0.14), rng.uniform(0.44, 0.5)
        if rng.random() < 0.5:
            small, large = large, small
        cy0, cy1 = rng.uniform(0.3, 0.45, size=2)
        cx0, cx1 = rng.uniform(0.3, 0.7, size=2)
        ref = _obj("ref", shapes[0], (cx0, cy0, small, small), (cx1, cy1, large, large), ident("ref"))
        o_start, o_end = _lane_track(rng, 0.82, 0.88, 0.18)
        other = _obj("other", shapes[1], o_start, o_end, ident("other"))
        objects = (ref, other)
    else:
        raise KeyError(f"unknown scenario family {family!r}; have {FAMILIES}")
    return ScenarioSpec(_W, _H, _T, objects, "ref", seed=int(seed), name=f"{family}-{seed}")


def builtin_suites(seeds: Sequence[int] = range(5)) -> dict[str, list[ScenarioSpec]]:
    return {family: [make_scenario(family, s) for s in seeds] for family in FAMILIES}


# -- file format -------------------------------------------------------------


def scenario_from_dict(data, source: str | None = None) -> ScenarioSpec:
    """Build a spec from parsed YAML; errors carry the offending line when known."""

    def fail(msg, container=None, key=None):
        line = _yaml.line_of(container, key) if container is not None else None
        where = f"{source or '<scenario>'}:{line}: " if line else ""
        raise BadScript(where + msg)

    if not isinstance(data, dict):
        fail("scenario must be a mapping")
    for key in ("width", "height", "num_frames", "objects"):
        if key not in data:
            fail(f"missing key {key!r}", data)
    if "referent_id" not in data:
        fail("missing key 'referent_id'", data)
    seed = int(data.get("seed", 0))
    dim = int(data.get("dim", 256))
    raw_objects = data["objects"]
    if not isinstance(raw_objects, list) or not raw_objects:
        fail("'objects' must be a non-empty list", data, "objects")

    identities: dict[str, np.ndarray] = {}
    pending = []
    for i, raw in enumerate(raw_objects):
        if not isinstance(raw, dict) or "id" not in raw:
            fail("object entry needs an 'id'", raw_objects, i)
        oid = str(raw["id"])
        ident = raw.get("identity", {})
        if isinstance(ident, list):
            vec = np.asarray(ident, dtype=float)
            if vec.shape != (dim,):
                fail(f"identity of {oid} must have {dim} entries", raw, "identity")
            identities[oid] = vec / np.linalg.norm(vec)
        elif isinstance(ident, dict) and "similar_to" in ident:
            pending.append((oid, ident, raw))
        elif isinstance(ident, dict):
            identities[oid] = identity_vector(int(ident.get("seed", seed)), oid, dim)
        else:
            fail(f"bad identity for {oid}", raw, "identity")
    for oid, ident, raw in pending:
        base = identities.get(str(ident["similar_to"]))
        if base is None:
            fail(f"{oid}: similar_to must name an object with a direct identity", raw, "identity")
        identities[oid] = similar_identity(base, float(ident.get("similarity", 0.97)), seed, oid)

    num_frames = int(data["num_frames"])
    objects = []
    for raw in raw_objects:
        oid = str(raw["id"])
        kf_raw = raw.get("keyframes")
        if not isinstance(kf_raw, list) or not kf_raw:
            fail(f"object {oid}: 'keyframes' must be a non-empty list", raw, "keyframes")
        kfs = []
        for j, k in enumerate(kf_raw):
            if not isinstance(k, list) or len(k) != 5:
                fail(f"object {oid}: keyframe must be [frame, cx, cy, w, h]", kf_raw, j)
            kfs.append(Keyframe(int(k[0]), *(float(v) for v in k[1:])))
        intervals = raw.get("visible", [[0, num_frames]])
        try:
            intervals = tuple((int(a), int(b)) for a, b in intervals)
        except (TypeError, ValueError):
            fail(f"object {oid}: 'visible' must be a list of [start, end) pairs", raw, "visible")
        obj = ObjectScript(oid, str(raw.get("shape", "rectangle")), tuple(kfs), intervals, identities[oid])
        try:
            _validate_object(obj, dim)
        except BadScript as exc:
            fail(str(exc), raw, "id")
        objects.append(obj)
    try:
        return ScenarioSpec(
            int(data["width"]), int(data["height"]), num_frames, tuple(objects),
            str(data["referent_id"]), seed=seed, dim=dim, name=str(data.get("name", "scenario")),
        )
    except BadScript as exc:
        fail(str(exc), data, "referent_id" if "referent" in str(exc) else None)


def load_scenario(path: str | PathLike) -> ScenarioSpec:
    text = Path(path).read_text()
    return scenario_from_dict(_yaml.load(text), source=str(path))


def export_masks(frames: Sequence[FrameTruth], out_dir: str | PathLike, object_id: str | None = None) -> None:
    """Write one ``frame_%04d.rle`` per frame for the referent (or ``object_id``)."""
    from qprop.geometry import write_rle

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for f in frames:
        obj = f.referent if object_id is None else next(o for o in f.objects if o.object_id == object_id)
        write_rle(out / f"frame_{f.frame_index:04d}.rle", obj.mask)
