import pytest
from hypothesis import given, settings, strategies as st

from subalign.baselines import HeuristicConfig, shift_baseline, spotting_heuristic
from subalign.corpus import SpottingAnnotation
from subalign.metrics import evaluate
from subalign.pipeline import evaluation_windows
from subalign.subtitles import Interval, Subtitle, SubtitleTrack, TrackKind, shift_track
from subalign.synthgen import SynthConfig, gen_episode
from subalign.windowing import WindowConfig

from .strategies import canonical_tracks


def _spot(word, t, conf=0.9):
    return SpottingAnnotation(word, t, conf, "ep")


def test_shift_baseline_deltas():
    audio = SubtitleTrack([Subtitle(1, 1000, 2000, "a"), Subtitle(2, 3000, 3500, "b")])
    assert shift_baseline(audio, 0) == audio
    assert shift_baseline(audio) == shift_track(audio, 3200)


def test_shift_baseline_exact_on_noise_free_data():
    cfg = SynthConfig(d_video=8, subs_per_episode=8, shift_std_s=0.0, dur_noise_std_s=0.0,
                      gap_frames_range=(100, 120))
    ep = gen_episode(cfg, 0)
    pred = shift_baseline(ep.audio, 3200)
    windows = evaluation_windows(ep, pred, WindowConfig())
    report = evaluate(pred.with_kind(TrackKind.PREDICTED), ep.gt, windows)
    assert report.frame_acc == 1.0
    assert report.f1 == {0.1: 1.0, 0.25: 1.0, 0.5: 1.0}


def test_recentres_on_mean_spotting_time():
    audio = SubtitleTrack([Subtitle(1, 36_000, 38_000, "bake the cake")])
    spots = [_spot("cake", 40_000), _spot("bake", 38_000)]
    out = spotting_heuristic(audio, spots, [], episode_ms=60_000)
    assert out[0].midpoint == 39_000
    assert out[0].duration == 2000
    assert out.kind is TrackKind.PREDICTED


def test_ignores_foreign_words_far_and_weak_spottings():
    audio = SubtitleTrack([Subtitle(1, 36_000, 38_000, "bake the cake")])
    spots = [_spot("dog", 37_000), _spot("cake", 50_000), _spot("bake", 39_000, conf=0.5)]
    out = spotting_heuristic(audio, spots, [], episode_ms=60_000)
    # nothing anchors, so the single cue is mapped onto the whole episode
    assert (out[0].start, out[0].end) == (0, 60_000)


def test_no_spottings_is_affine_fit_into_episode():
    audio = SubtitleTrack([Subtitle(1, 10_000, 12_000, "a b"), Subtitle(2, 14_000, 20_000, "c"),
                           Subtitle(3, 25_000, 30_000, "d")])
    out = spotting_heuristic(audio, [], [], episode_ms=40_000)
    # [10, 30] s maps onto [0, 40] s, a scale of 2
    assert out.intervals == [Interval(0, 4000), Interval(8000, 20_000), Interval(30_000, 40_000)]


def test_unanchored_cues_fill_gap_between_anchors():
    audio = SubtitleTrack([
        Subtitle(1, 10_000, 11_000, "alpha"),
        Subtitle(2, 12_000, 13_000, "x"),
        Subtitle(3, 14_000, 15_000, "omega"),
    ])
    spots = [_spot("alpha", 12_500), _spot("omega", 18_500)]
    out = spotting_heuristic(audio, spots, [], episode_ms=40_000)
    assert out[0].interval == Interval(12_000, 13_000)
    assert out[2].interval == Interval(18_000, 19_000)
    assert out[1].interval == Interval(13_000, 18_000)


def test_expands_into_active_segment():
    audio = SubtitleTrack([Subtitle(1, 10_000, 12_000, "a")])
    spots = [_spot("a", 11_000)]
    out = spotting_heuristic(audio, spots, [Interval(9_000, 14_000)], episode_ms=40_000)
    # symmetric expansion about 11 s, limited by the nearer segment edge
    assert out[0].interval == Interval(9_000, 13_000)


def test_config_validation():
    with pytest.raises(ValueError):
        HeuristicConfig(pad_seconds=0)


spot_lists = st.lists(st.tuples(st.sampled_from(["a", "b", "c", "d"]), st.integers(0, 120_000),
                                st.floats(0.5, 1.0)), max_size=30)
segments = st.lists(st.tuples(st.integers(0, 120_000), st.integers(100, 20_000)), max_size=6)


@settings(max_examples=200, deadline=None)
@given(canonical_tracks(max_cues=15), spot_lists, segments)
def test_output_ordered_and_overlap_free(track, spots, segs):
    texts = ["a b", "c", "d a", "b c d"]
    audio = SubtitleTrack([Subtitle(s.index, s.start, s.end, texts[i % 4])
                           for i, s in enumerate(track)])
    spottings = [_spot(w, t, c) for w, t, c in spots]
    active = [Interval(a, a + d) for a, d in segs]
    out = spotting_heuristic(audio, spottings, active)
    assert len(out) == len(audio)
    assert [s.text for s in out] == [s.text for s in audio]
    for a, b in zip(out, out[1:]):
        assert a.end <= b.start
    assert all(s.start >= 0 and s.duration > 0 for s in out)
