import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subalign.features import FeatureSequence
from subalign.subtitles import Interval, Subtitle
from subalign.windowing import (
    Window,
    WindowConfig,
    decode_span,
    encode_span,
    make_test_window,
    make_train_window,
    time_to_window_frame,
)

CFG = WindowConfig()


def episode(seconds=60.0, d=4, seed=0):
    rng = np.random.default_rng(seed)
    # strictly non-zero rows so padding is recognisable
    return FeatureSequence(rng.uniform(0.5, 1.5, (int(seconds * 25), d)), 25.0)


def window_at(start_frame=0):
    return Window.timing_only(start_frame, CFG, episode_frames=10_000)


def test_default_window_is_125_frames():
    assert CFG.T == 125
    assert WindowConfig(window_seconds=8).T == 50


def test_too_short_window_rejected():
    with pytest.raises(ValueError):
        WindowConfig(window_seconds=1)


def test_time_to_window_frame():
    w = window_at(0)
    assert time_to_window_frame(0, w) == 0
    assert time_to_window_frame(1000, w) == 6
    assert time_to_window_frame(-1, w) is None
    assert time_to_window_frame(20_000, w) is None
    assert time_to_window_frame(19_999, w) == 124


def test_encode_full_and_disjoint():
    w = window_at(100)
    assert encode_span(Interval(int(w.start_ms), int(w.end_ms)), w).all()
    assert not encode_span(Interval(0, 1000), w).any()
    assert not encode_span(Interval.empty(5000), w).any()


def test_encode_frames_10_to_20():
    w = window_at(0)
    bits = encode_span(Interval(10 * 160, 21 * 160), w)
    assert np.flatnonzero(bits).tolist() == list(range(10, 21))
    # a partial overlap with a frame still marks it
    bits = encode_span(Interval(10 * 160 + 150, 20 * 160 + 1), w)
    assert np.flatnonzero(bits).tolist() == list(range(10, 21))


def test_decode_first_to_last():
    w = window_at(0)
    probs = np.full(125, 0.1)
    probs[3:8] = 0.9
    assert decode_span(probs, 0.5, w) == Interval(3 * 160, 8 * 160)


def test_decode_nothing_above():
    assert decode_span(np.full(125, 0.2), 0.5, window_at(0)).is_empty()


def test_decode_ignores_interior_gap_and_ties():
    w = window_at(0)
    probs = np.zeros(125)
    probs[[2, 9]] = 0.8
    probs[20] = 0.5  # exactly tau counts as below
    assert decode_span(probs, 0.5, w) == Interval(2 * 160, 10 * 160)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 19_000), st.integers(1, 19_000), st.integers(0, 50))
def test_encode_decode_round_trip(start, dur, grid_shift):
    w = window_at(grid_shift * 4)
    iv = Interval(int(w.start_ms) + start, min(int(w.start_ms) + start + dur, int(w.end_ms)))
    if iv.is_empty():
        return
    back = decode_span(encode_span(iv, w).astype(float), 0.5, w)
    assert back.start_ms <= iv.start_ms < back.start_ms + 160
    assert back.end_ms - 160 < iv.end_ms <= back.end_ms


def test_train_window_contains_gt():
    ep = episode(60)
    gt = Subtitle(1, 30_000, 33_000, "x")
    rng = np.random.default_rng(1)
    starts = set()
    for _ in range(1000):
        w = make_train_window(gt, ep, rng, CFG)
        assert w.start_ms <= gt.start and gt.end <= w.end_ms
        starts.add(w.start_frame)
    # placement is spread over the admissible range
    assert len(starts) > 200


def test_train_window_long_gt_is_centred():
    ep = episode(60)
    gt = Subtitle(1, 10_000, 35_000, "x")
    w = make_train_window(gt, ep, np.random.default_rng(0), CFG)
    assert (w.start_ms + w.end_ms) / 2 == pytest.approx(22_500, abs=40)


def test_train_window_seeded():
    ep = episode(60)
    gt = Subtitle(1, 30_000, 33_000, "x")
    a = make_train_window(gt, ep, np.random.default_rng(5), CFG)
    b = make_train_window(gt, ep, np.random.default_rng(5), CFG)
    assert a.start_frame == b.start_frame
    np.testing.assert_array_equal(a.features, b.features)


def test_overlap_only_placement_flag():
    ep = episode(60)
    gt = Subtitle(1, 30_000, 33_000, "x")
    rng = np.random.default_rng(2)
    cfg = WindowConfig(contain_gt=False)
    contained = 0
    for _ in range(300):
        w = make_train_window(gt, ep, rng, cfg)
        assert w.start_ms < gt.end and gt.start < w.end_ms
        contained += w.start_ms <= gt.start and gt.end <= w.end_ms
    assert contained < 300


def test_test_window_centred():
    ep = episode(60)
    w = make_test_window(Subtitle(1, 29_000, 31_000, "x"), ep, CFG)
    assert (w.start_ms, w.end_ms) == (20_000, 40_000)
    assert not w.pad_mask.any()


def test_test_window_pads_episode_start():
    ep = episode(60)
    w = make_test_window(Subtitle(1, 1_000, 3_000, "x"), ep, CFG)
    assert (w.start_ms, w.end_ms) == (-8_000, 12_000)
    assert w.pad_mask[:50].all() and not w.pad_mask[50:].any()
    assert not w.features[:50].any()
    np.testing.assert_array_equal(w.features[50], ep.frames[0])


def test_test_window_deterministic():
    ep = episode(60)
    prior = Subtitle(1, 12_345, 15_000, "x")
    a, b = make_test_window(prior, ep, CFG), make_test_window(prior, ep, CFG)
    assert a.start_frame == b.start_frame
    np.testing.assert_array_equal(a.features, b.features)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 80_000))
def test_pad_mask_matches_zero_rows(mid):
    ep = episode(30)
    w = make_test_window(Interval(mid, mid + 1000), ep, CFG)
    zero_rows = ~w.features.any(axis=1)
    np.testing.assert_array_equal(zero_rows, w.pad_mask)
    assert w.start_frame % CFG.subsample_stride == 0
