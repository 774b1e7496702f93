import numpy as np
import pytest

from qprop import _yaml
from qprop.errors import BadScript
from qprop.geometry import Mask, box_to_corners, read_rle
from qprop.scenario import (
    FAMILIES,
    Keyframe,
    ObjectScript,
    ScenarioSpec,
    builtin_suites,
    export_masks,
    generate,
    identity_vector,
    load_scenario,
    make_scenario,
    rasterize,
    scenario_from_dict,
    similar_identity,
)


def one_object(keyframes, intervals=((0, 6),), shape="rectangle", frames=6, w=40, h=30):
    obj = ObjectScript("a", shape, tuple(Keyframe(*k) for k in keyframes), tuple(intervals), identity_vector(0, "a", 8))
    return ScenarioSpec(w, h, frames, (obj,), "a", dim=8)


def test_static_rectangle_identical_frames():
    frames = generate(one_object([(0, 0.5, 0.5, 0.3, 0.4)], frames=3, intervals=((0, 3),)))
    assert len(frames) == 3
    assert frames[0].objects[0].mask == frames[1].objects[0].mask == frames[2].objects[0].mask
    assert frames[0].objects[0].box == frames[2].objects[0].box


def test_visibility_interval_semantics():
    frames = generate(one_object([(0, 0.5, 0.5, 0.3, 0.4)], intervals=((2, 5),)))
    assert [f.referent_visible for f in frames] == [False, False, True, True, True, False]
    for f in frames:
        ref = f.referent
        assert ref.visible == (not ref.mask.is_empty)
        assert ref.box.is_empty == (not ref.visible)


def test_moving_ellipse_centroid_tracks_center():
    spec = one_object([(0, 0.2, 0.3, 0.25, 0.3), (9, 0.8, 0.7, 0.25, 0.3)], intervals=((0, 10),),
                      shape="ellipse", frames=10, w=64, h=48)
    for f in generate(spec):
        cx, cy, _, _ = spec.objects[0].state_at(f.frame_index)
        mx, my = f.referent.mask.centroid()
        assert abs(mx - cx * 64) <= 1 and abs(my - cy * 48) <= 1


def test_tight_box_property():
    for fam in FAMILIES:
        for f in generate(make_scenario(fam, 0)):
            for obj in f.objects:
                if not obj.visible:
                    continue
                bits = obj.mask.bits
                x0, y0, x1, y1 = (int(round(v)) for v in box_to_corners(obj.box, f.width, f.height))
                assert bits[:, :x0].sum() == bits[:, x1:].sum() == 0
                assert bits[:y0].sum() == bits[y1:].sum() == 0
                # shrinking any side by one pixel drops a mask pixel
                assert bits[:, x0].any() and bits[:, x1 - 1].any()
                assert bits[y0].any() and bits[y1 - 1].any()


def test_rasterize_uses_pixel_centres():
    m = rasterize("rectangle", 0.5, 0.5, 0.5, 0.5, 4, 4)
    assert m.bits.tolist() == [[0, 0, 0, 0], [0, 1, 1, 0], [0, 1, 1, 0], [0, 0, 0, 0]]
    with pytest.raises(BadScript):
        rasterize("triangle", 0.5, 0.5, 0.5, 0.5, 4, 4)


def test_generate_is_deterministic():
    for fam in FAMILIES:
        a, b = generate(make_scenario(fam, 2)), generate(make_scenario(fam, 2))
        assert all(x.same_as(y) for x, y in zip(a, b))


def test_builtin_suites():
    suites = builtin_suites()
    assert set(suites) == set(FAMILIES) and all(len(v) == 5 for v in suites.values())
    for spec in suites["entrance"]:
        assert not generate(spec)[0].referent_visible
    for spec in suites["occlusion"]:
        flags = [f.referent_visible for f in generate(spec)]
        first_hidden = flags.index(False)
        assert flags[0] and not all(flags[first_hidden:]) and any(flags[first_hidden:])
    for spec in suites["distractors"]:
        ref = spec.expression
        others = [o for o in spec.objects if o.id != spec.referent_id]
        assert len(others) >= 2
        assert all(float(ref @ o.identity) > 0.95 for o in others)
    for spec in suites["scale-change"]:
        areas = [f.referent.mask.area for f in generate(spec)]
        assert max(areas) >= 3 * min(areas)
    with pytest.raises(KeyError):
        make_scenario("stampede", 0)


def test_similar_identity():
    base = identity_vector(1, "x", 64)
    sim = similar_identity(base, 0.9, 1, "y")
    assert np.linalg.norm(sim) == pytest.approx(1.0)
    assert float(base @ sim) == pytest.approx(0.9)


def test_spec_validation():
    with pytest.raises(BadScript):
        one_object([(0, 0.5, 0.5, 0.3, 0.4)], intervals=((3, 5), (1, 4)))
    with pytest.raises(BadScript):
        one_object([(3, 0.5, 0.5, 0.3, 0.4), (1, 0.5, 0.5, 0.3, 0.4)])
    with pytest.raises(BadScript):
        one_object([(0, 0.5, 0.5, 0.0, 0.4)])
    obj = one_object([(0, 0.5, 0.5, 0.3, 0.4)]).objects[0]
    with pytest.raises(BadScript):
        ScenarioSpec(10, 10, 3, (obj,), "nobody", dim=8)
    with pytest.raises(BadScript):
        ScenarioSpec(10, 10, 0, (obj,), "a", dim=8)


SCRIPT = """\
name: demo
width: 32
height: 24
num_frames: 4
seed: 5
dim: 16
referent_id: car
objects:
  - id: car
    shape: ellipse
    keyframes: [[0, 0.3, 0.5, 0.3, 0.4], [3, 0.7, 0.5, 0.3, 0.4]]
    visible: [[0, 2], [3, 4]]
  - id: van
    keyframes: [[0, 0.5, 0.2, 0.2, 0.2]]
    identity: {similar_to: car, similarity: 0.9}
"""


def test_scenario_file_round_trip(tmp_path):
    path = tmp_path / "demo.yaml"
    path.write_text(SCRIPT)
    spec = load_scenario(path)
    assert (spec.width, spec.height, spec.num_frames, spec.referent_id, spec.name) == (32, 24, 4, "car", "demo")
    flags = [f.referent_visible for f in generate(spec)]
    assert flags == [True, True, False, True]
    van = spec.object("van")
    assert float(van.identity @ spec.expression) == pytest.approx(0.9)
    export_masks(generate(spec), tmp_path / "gt")
    files = sorted(p.name for p in (tmp_path / "gt").iterdir())
    assert files == [f"frame_{i:04d}.rle" for i in range(4)]
    assert read_rle(tmp_path / "gt" / "frame_0002.rle") == Mask.zeros(32, 24)


@pytest.mark.parametrize("edit, line", [
    (lambda s: s.replace("referent_id: car\n", ""), 1),
    (lambda s: s.replace("[[0, 0.5, 0.2, 0.2, 0.2]]", "[[0, 0.5, 0.2]]"), 14),
    (lambda s: s.replace("similar_to: car", "similar_to: bus"), 15),
    (lambda s: s.replace("shape: ellipse", "shape: blob"), 9),
])
def test_script_errors_carry_lines(edit, line):
    with pytest.raises(BadScript) as exc:
        scenario_from_dict(_yaml.load(edit(SCRIPT)), "demo.yaml")
    assert f"demo.yaml:{line}:" in str(exc.value)
