import dataclasses

import numpy as np
import pytest

from qprop.detector import OracleParams, corrupt_mask, detect
from qprop.geometry import Box, Mask, box_iou
from qprop.losses import l1_box_loss
from qprop.propagation import Origin, PropagationConfig, QueryState, encode_position, init_queries
from qprop.scenario import FrameView, make_scenario, render_frame


def query_at(box, content, position=None):
    pos = encode_position(Box(0.5, 0.5, 0.4, 0.4)) if position is None else position
    return QueryState(np.asarray(content, dtype=float), pos, box, Origin.PROPAGATED)


def single_object_view(frame_index=0, seed=0):
    spec = make_scenario("scale-change", seed)
    f = render_frame(spec, frame_index)
    ref = f.referent
    return FrameView(f.frame_index, f.width, f.height, (ref,), f.expression), ref


def test_params_validation():
    for bad in ({"score_sharpness": 0}, {"prior_gain": 1.5}, {"box_noise_sigma": -1}, {"distractor_confusion": 2}):
        with pytest.raises(ValueError):
            OracleParams(**bad)


def test_noise_free_oracle_returns_true_box():
    view, ref = single_object_view()
    params = OracleParams(prior_gain=0.0, box_noise_sigma=0.0, distractor_confusion=0.0)
    far = Box(0.9, 0.9, 0.1, 0.1)
    for base in (far, ref.box, Box(0.2, 0.8, 0.3, 0.2)):
        (p,) = detect(view, [query_at(base, ref.identity)], params)
        assert p.box == ref.box
        assert p.mask == ref.mask


def test_good_prior_never_worse_than_far_prior():
    view, ref = single_object_view()
    far = Box(0.95, 0.05, 0.1, 0.1)
    assert box_iou(far, ref.box) == 0
    for seed in range(200):
        params = OracleParams(prior_gain=1.0, box_noise_sigma=0.05, seed=seed)
        (good,) = detect(view, [query_at(ref.box, ref.identity)], params)
        (bad,) = detect(view, [query_at(far, ref.identity)], params)
        assert l1_box_loss(good.box, ref.box) <= l1_box_loss(bad.box, ref.box) + 1e-12


def test_expected_error_non_increasing_in_prior_iou():
    view, ref = single_object_view()
    t = ref.box
    # priors of decreasing overlap: same centre, growing size mismatch, then far away
    priors = [t, Box(t.cx, t.cy, min(1, t.w * 1.5), min(1, t.h * 1.5)),
              Box(t.cx, t.cy, min(1, t.w * 3), min(1, t.h * 3)), Box(0.95, 0.05, 0.1, 0.1)]
    ious = [box_iou(p, t) for p in priors]
    assert ious == sorted(ious, reverse=True)
    means = []
    for prior in priors:
        errs = []
        for seed in range(200):
            (p,) = detect(view, [query_at(prior, ref.identity)], OracleParams(prior_gain=0.7, seed=seed))
            errs.append(l1_box_loss(p.box, t))
        means.append(np.mean(errs))
    assert all(a <= b for a, b in zip(means, means[1:])), means


def test_occluded_referent_gives_empty_low_score():
    spec = make_scenario("occlusion", 0)
    hidden = [t for t in range(spec.num_frames) if not render_frame(spec, t).referent_visible]
    assert hidden
    ref_identity = spec.expression
    for t in hidden:
        f = render_frame(spec, t)
        queries = init_queries(PropagationConfig()) + [query_at(Box(0.5, 0.3, 0.3, 0.3), ref_identity)]
        for p in detect(f.view(), queries, OracleParams(seed=t)):
            assert p.score < 0.5 and p.mask.is_empty


def test_swapped_affinities_swap_scores():
    spec = make_scenario("occlusion", 1)
    f = render_frame(spec, 0)
    a, b = f.objects
    box = Box(0.5, 0.5, 0.4, 0.4)
    # expression symmetric between the two objects; only the query content differs
    expr = (a.identity + b.identity) / np.linalg.norm(a.identity + b.identity)
    view = FrameView(0, f.width, f.height, f.objects, expr)
    params = OracleParams(distractor_confusion=0.0, box_noise_sigma=0.0)
    qa, qb = query_at(box, a.identity), query_at(box, b.identity)
    p1 = detect(view, [qa, qb], params)
    p2 = detect(view, [qb, qa], params)
    assert (p1[0].score, p1[1].score) == (p2[1].score, p2[0].score)
    assert p1[0].mask == a.mask and p1[1].mask == b.mask
    assert not hasattr(view, "referent_id")


def test_detect_deterministic_and_contract():
    spec = make_scenario("distractors", 3)
    queries = init_queries(PropagationConfig())
    for t in range(spec.num_frames):
        view = render_frame(spec, t).view()
        params = OracleParams(seed=9)
        p1, p2 = detect(view, queries, params), detect(view, queries, params)
        assert len(p1) == len(queries)
        for x, y, q in zip(p1, p2, queries):
            assert x.same_as(y)
            assert 0 < x.score < 1
            assert x.mask.shape == (view.height, view.width)
            assert x.output_embedding.shape == (256,)
            assert np.array_equal(x.position_passthrough, q.position)
            if not x.mask.is_empty:
                mx, my = x.mask.centroid()
                mx, my = mx / view.width, my / view.height
                assert abs(mx - x.box.cx) <= 0.55 * x.box.w and abs(my - x.box.cy) <= 0.55 * x.box.h
    with pytest.raises(ValueError):
        detect(render_frame(spec, 0).view(), [], OracleParams())


def test_seed_changes_noise():
    view, ref = single_object_view()
    q = [query_at(Box(0.9, 0.1, 0.1, 0.1), ref.identity)]
    a = detect(view, q, OracleParams(seed=1))[0]
    b = detect(view, q, OracleParams(seed=2))[0]
    assert a.box != b.box
    assert dataclasses.asdict(OracleParams(seed=1))["seed"] == 1


def test_corrupt_mask():
    bits = np.zeros((20, 20), dtype=np.uint8)
    bits[5:15, 5:15] = 1
    m = Mask(bits)
    assert corrupt_mask(m, 0, True) == m
    grown, shrunk = corrupt_mask(m, 2, True), corrupt_mask(m, 2, False)
    assert grown.area > m.area > shrunk.area
    assert np.all(grown.bits >= m.bits) and np.all(shrunk.bits <= m.bits)
    assert shrunk.area == 36
