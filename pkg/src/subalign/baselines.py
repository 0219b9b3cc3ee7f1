"""Reference aligners: the constant shift and the sign-spotting heuristic."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import SpottingAnnotation
from .features import TokenizeError, tokenize
from .subtitles import Interval, SubtitleError, SubtitleTrack, TrackKind, shift_track

log = logging.getLogger(__name__)

MIN_DUR_MS = 40  # one source frame at 25 fps


@dataclass(frozen=True)
class HeuristicConfig:
    pad_seconds: float = 4.0
    confidence_floor: float = 0.8

    def __post_init__(self):
        if self.pad_seconds <= 0:
            raise ValueError("pad_seconds must be positive")


def shift_baseline(audio: SubtitleTrack, delta_ms: int = 3200) -> SubtitleTrack:
    return shift_track(audio, delta_ms)


def _own_words(text: str) -> set[str]:
    try:
        return set(tokenize(text))
    except TokenizeError:
        return set()


def spotting_heuristic(audio: SubtitleTrack, spottings: Sequence[SpottingAnnotation],
                       active: Sequence[Interval], cfg: HeuristicConfig = HeuristicConfig(),
                       episode_ms: int | None = None) -> SubtitleTrack:
    """Four-stage alignment from sparse sign spottings.

    1. ``active`` gives the signing segments (computed elsewhere).
    2. Cues with a confident spotting of one of their own words inside the
       padded audio interval are recentred on the mean spotted time.
    3. Each run of unanchored cues is mapped affinely into the gap between its
       anchored neighbours (episode bounds at the ends).
    4. Left to right, each cue is expanded about its midpoint to fill its
       active segment without touching its neighbours.
    """
    if len(audio) == 0:
        raise SubtitleError("empty audio track")
    subs = list(audio)
    n = len(subs)
    if episode_ms is None:
        ends = [s.end for s in subs] + [sp.time_ms for sp in spottings] + [a.end_ms for a in active]
        episode_ms = max(ends)
    pad = int(round(cfg.pad_seconds * 1000))
    spots = [sp for sp in spottings if sp.confidence >= cfg.confidence_floor]

    # stage 2: anchors
    starts = np.array([s.start for s in subs], dtype=float)
    ends = np.array([s.end for s in subs], dtype=float)
    anchored = np.zeros(n, dtype=bool)
    for i, s in enumerate(subs):
        words = _own_words(s.text)
        times = [sp.time_ms for sp in spots
                 if sp.word.lower() in words and s.start - pad <= sp.time_ms <= s.end + pad]
        if not times:
            continue
        half = s.duration / 2
        mid = float(np.mean(times))
        lo, hi = mid - half, mid + half
        if lo < 0 or hi > episode_ms:
            log.info("cue %d recentred outside the episode; clamped", s.index)
            shift = -lo if lo < 0 else episode_ms - hi
            lo, hi = lo + shift, hi + shift
        starts[i], ends[i] = lo, hi
        anchored[i] = True

    # anchors must keep the original order
    last_mid = -np.inf
    for i in range(n):
        if anchored[i]:
            mid = (starts[i] + ends[i]) / 2
            if mid <= last_mid:
                anchored[i] = False
                starts[i], ends[i] = subs[i].start, subs[i].end
            else:
                last_mid = mid
    anchor_idx = np.flatnonzero(anchored)
    # overlapping anchors meet halfway
    for a, b in zip(anchor_idx, anchor_idx[1:]):
        if ends[a] > starts[b]:
            cut = (ends[a] + starts[b]) / 2
            ends[a] = max(cut, starts[a] + MIN_DUR_MS)
            starts[b] = min(max(cut, ends[a]), ends[b] - MIN_DUR_MS)

    # stage 3: one affine map per gap
    bounds = [-1] + list(anchor_idx) + [n]
    for left, right in zip(bounds, bounds[1:]):
        run = list(range(left + 1, right))
        if not run:
            continue
        g0 = 0.0 if left < 0 else ends[left]
        g1 = float(episode_ms) if right >= n else starts[right]
        g1 = max(g0, g1)
        r0 = float(subs[run[0]].start)
        r1 = float(subs[run[-1]].end)
        scale = (g1 - g0) / (r1 - r0)
        for i in run:
            starts[i] = g0 + (subs[i].start - r0) * scale
            ends[i] = g0 + (subs[i].end - r0) * scale

    starts, ends = _pack(starts, ends, episode_ms)

    # stage 4: local expansion into active segments
    for i in range(n):
        seg = _best_segment(starts[i], ends[i], active)
        if seg is None:
            continue
        lo = max(seg.start_ms, ends[i - 1] if i else 0.0)
        hi = min(seg.end_ms, starts[i + 1] if i + 1 < n else float(episode_ms))
        mid = (starts[i] + ends[i]) / 2
        half = (ends[i] - starts[i]) / 2
        if half <= 0 or not lo <= starts[i] or not ends[i] <= hi:
            continue
        factor = max(1.0, min((mid - lo) / half, (hi - mid) / half))
        starts[i], ends[i] = mid - factor * half, mid + factor * half

    starts, ends = _pack(starts, ends, episode_ms)
    intervals = [Interval(int(a), int(b)) for a, b in zip(starts, ends)]
    return audio.with_intervals(intervals, TrackKind.PREDICTED)


def _best_segment(start: float, end: float, active: Sequence[Interval]) -> Interval | None:
    best, best_overlap = None, 0.0
    for seg in active:
        ov = min(end, seg.end_ms) - max(start, seg.start_ms)
        if ov > best_overlap:
            best, best_overlap = seg, ov
    return best


def _pack(starts: np.ndarray, ends: np.ndarray, episode_ms: float):
    """Integer-millisecond, ordered, overlap-free cues of at least MIN_DUR_MS."""
    n = len(starts)
    s = np.round(starts).astype(np.int64)
    e = np.round(ends).astype(np.int64)
    limit = max(int(episode_ms), n * MIN_DUR_MS)
    # forward: no overlap, minimum duration
    prev = 0
    for i in range(n):
        s[i] = max(s[i], prev, 0)
        e[i] = max(e[i], s[i] + MIN_DUR_MS)
        prev = e[i]
    # backward: stay inside the episode
    nxt = limit
    for i in range(n - 1, -1, -1):
        e[i] = min(e[i], nxt)
        s[i] = min(s[i], e[i] - MIN_DUR_MS)
        nxt = s[i]
    return s.astype(float), e.astype(float)
