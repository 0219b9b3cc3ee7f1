"""Episode-level overlap resolution.

Per-subtitle predictions are made independently inside their own windows and
can overlap. Here the confidently predicted frames of the whole episode are
partitioned into contiguous, ordered, non-empty runs, one per subtitle, so
that the summed sigmoid scores are maximal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .subtitles import Interval, SubtitleTrack, TrackKind
from .windowing import Window, decode_span, encode_span

TAU_DTW = 0.4


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AlignmentResult:
    """Model output for one subtitle: its window, frame scores and prior."""

    window: Window
    probs: np.ndarray
    prior: Interval
    tau: float = 0.5

    @property
    def predicted(self) -> Interval:
        return decode_span(self.probs, self.tau, self.window)


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    probs: np.ndarray  # (frames, subtitles)
    frame_start_ms: np.ndarray
    frame_end_ms: np.ndarray

    def __post_init__(self):
        if self.probs.ndim != 2:
            raise AlignmentError("score matrix must be 2-D")
        n = self.probs.shape[0]
        if self.frame_start_ms.shape != (n,) or self.frame_end_ms.shape != (n,):
            raise AlignmentError("frame times do not match score rows")
        if n > 1 and np.any(np.diff(self.frame_start_ms) <= 0):
            raise AlignmentError("score rows must be in increasing time order")

    @classmethod
    def from_probs(cls, probs, frame_ms: float = 160.0) -> "ScoreMatrix":
        probs = np.asarray(probs, dtype=np.float64)
        starts = np.arange(probs.shape[0]) * frame_ms
        return cls(probs, starts, starts + frame_ms)


@dataclass(frozen=True, eq=False)
class GlobalAlignment:
    intervals: list[Interval]  # indexed by original subtitle index
    assignment: np.ndarray  # frame row -> original subtitle index
    order: list[int]
    total: float


def select_frames(results: Sequence[AlignmentResult], tau_dtw: float = TAU_DTW) -> ScoreMatrix:
    """Union of frames scoring above ``tau_dtw``; prior frames for silent subtitles.

    Rows are episode stride-grid frames in time order. A subtitle's score at a
    frame outside its window is 0. Padded (out-of-episode) frames are never
    selected.
    """
    if not results:
        raise AlignmentError("no subtitle results to align")
    chosen: set[int] = set()
    for res in results:
        win = res.window
        valid = ~win.pad_mask
        pick = (res.probs > tau_dtw) & valid
        if not pick.any():
            pick = encode_span(res.prior, win) & valid
        chosen.update(int(g) for g in win.grid_index[pick])
    if not chosen:
        raise AlignmentError("empty frame selection: no scores above threshold and no prior frames")
    grid = np.array(sorted(chosen))
    row_of = {g: r for r, g in enumerate(grid)}
    probs = np.zeros((len(grid), len(results)))
    for j, res in enumerate(results):
        for k, g in enumerate(res.window.grid_index):
            r = row_of.get(int(g))
            if r is not None and not res.window.pad_mask[k]:
                probs[r, j] = res.probs[k]
    win = results[0].window
    frame_ms = win.stride * 1000.0 / win.fps
    starts = grid * frame_ms
    ends = np.minimum(starts + frame_ms, win.episode_ms)
    return ScoreMatrix(probs, starts, ends)


def order_subtitles(results: Sequence[AlignmentResult]) -> list[int]:
    """Stable order by predicted midpoint; empty predictions use the prior midpoint."""

    def key(j: int):
        pred = results[j].predicted
        mid = results[j].prior.midpoint if pred.is_empty() else pred.midpoint
        return (mid, j)

    return sorted(range(len(results)), key=key)


def monotone_partition(scores: np.ndarray) -> tuple[np.ndarray, float]:
    """Split rows into ``scores.shape[1]`` ordered non-empty runs maximising the sum.

    Returns the column assigned to each row and the optimal total. Integer input
    is solved in exact integer arithmetic. At equal totals the earlier boundary
    wins.
    """
    scores = np.asarray(scores)
    n, s = scores.shape
    if s < 1:
        raise AlignmentError("need at least one subtitle")
    if n < s:
        raise AlignmentError(f"{n} selected frames cannot cover {s} subtitles")
    if np.issubdtype(scores.dtype, np.integer):
        scores = scores.astype(np.int64)
        neg = np.iinfo(np.int64).min // 4
    else:
        scores = scores.astype(np.float64)
        neg = -np.inf
    dp = np.full((n, s), neg, dtype=scores.dtype)
    dp[0, 0] = scores[0, 0]
    for i in range(1, n):
        dp[i, 0] = dp[i - 1, 0] + scores[i, 0]
        dp[i, 1:] = scores[i, 1:] + np.maximum(dp[i - 1, 1:], dp[i - 1, :-1])
    assign = np.empty(n, dtype=np.int64)
    j = s - 1
    assign[n - 1] = j
    for i in range(n - 1, 0, -1):
        # staying in the same run on ties pushes the boundary earlier
        if j > 0 and not (dp[i - 1, j] >= dp[i - 1, j - 1]):
            j -= 1
        assign[i - 1] = j
    if j != 0:
        raise AlignmentError("internal error: partition does not start at the first subtitle")
    return assign, dp[n - 1, s - 1].item()


def dtw_align(scores: ScoreMatrix, order: Sequence[int]) -> GlobalAlignment:
    order = list(order)
    s = scores.probs.shape[1]
    if sorted(order) != list(range(s)):
        raise AlignmentError("order must be a permutation of the subtitle columns")
    assign_pos, total = monotone_partition(scores.probs[:, order])
    assignment = np.asarray(order)[assign_pos]
    intervals = [Interval.empty()] * s
    for pos, j in enumerate(order):
        rows = np.flatnonzero(assign_pos == pos)
        intervals[j] = Interval(int(round(scores.frame_start_ms[rows[0]])),
                                int(round(scores.frame_end_ms[rows[-1]])))
    return GlobalAlignment(intervals, assignment, order, float(total))


def resolve_track(results: Sequence[AlignmentResult], track: SubtitleTrack,
                  tau_dtw: float = TAU_DTW) -> SubtitleTrack:
    """Overlap-free predicted track with the texts and indices of ``track``."""
    if len(results) != len(track):
        raise AlignmentError(f"{len(results)} results for {len(track)} subtitles")
    scores = select_frames(results, tau_dtw)
    alignment = dtw_align(scores, order_subtitles(results))
    return track.with_intervals(alignment.intervals, TrackKind.PREDICTED)


def independent_track(results: Sequence[AlignmentResult], track: SubtitleTrack) -> SubtitleTrack:
    """Thresholded per-subtitle predictions without overlap resolution.

    Subtitles with no frame above the threshold fall back to their prior.
    """
    intervals = []
    for res in results:
        iv = res.predicted
        intervals.append(res.prior if iv.is_empty() else iv)
    return track.with_intervals(intervals, TrackKind.PREDICTED)
