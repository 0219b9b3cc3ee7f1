"""Frame accuracy and F1@IoU of a predicted track against ground truth."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .subtitles import Interval, SubtitleTrack, interval_iou
from .windowing import Window, encode_span

THRESHOLDS = (0.10, 0.25, 0.50)

Intervals = Union[SubtitleTrack, Sequence[Interval]]


class MetricsError(ValueError):
    pass


def _intervals(track: Intervals) -> list[Interval]:
    if isinstance(track, SubtitleTrack):
        return track.intervals
    return list(track)


def _aligned(pred: Intervals, gt: Intervals) -> tuple[list[Interval], list[Interval]]:
    p, g = _intervals(pred), _intervals(gt)
    if len(p) != len(g):
        raise MetricsError(f"index mismatch: {len(p)} predictions vs {len(g)} ground-truth cues")
    return p, g


def frame_accuracy(pred: Intervals, gt: Intervals, windows: Sequence[Window]) -> float:
    """Mean over subtitles of the fraction of window frames with matching membership."""
    p, g = _aligned(pred, gt)
    if len(windows) != len(g):
        raise MetricsError("need exactly one evaluation window per subtitle")
    if not g:
        raise MetricsError("cannot evaluate an empty track")
    accs = [np.mean(encode_span(pi, w) == encode_span(gi, w)) for pi, gi, w in zip(p, g, windows)]
    return float(np.mean(accs))


def episode_frame_accuracy(pred: Intervals, gt: Intervals, episode_ms: float,
                           frame_ms: float = 160.0) -> float:
    """Whole-timeline variant: each frame is labelled with the cue covering it.

    Where cues overlap the lowest index wins; uncovered frames are background.
    """
    p, g = _aligned(pred, gt)
    n = max(1, math.ceil(episode_ms / frame_ms))
    starts = np.arange(n) * frame_ms
    ends = starts + frame_ms

    def labels(ivs):
        lab = np.full(n, -1)
        for j in range(len(ivs) - 1, -1, -1):
            iv = ivs[j]
            if iv.is_empty():
                continue
            hit = np.maximum(starts, iv.start_ms) < np.minimum(ends, iv.end_ms)
            lab[hit] = j
        return lab

    return float(np.mean(labels(p) == labels(g)))


def _f1(hits: int, n_pred: int, n_gt: int) -> float:
    precision = hits / n_pred if n_pred else 0.0
    recall = hits / n_gt if n_gt else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def f1_at_iou(pred: Intervals, gt: Intervals, threshold: float) -> float:
    """F1 over index-aligned pairs; a hit needs IoU >= threshold.

    Empty predictions are misses and do not count towards precision.
    """
    p, g = _aligned(pred, gt)
    hits = sum(interval_iou(pi, gi) >= threshold for pi, gi in zip(p, g) if not pi.is_empty())
    n_pred = sum(not pi.is_empty() for pi in p)
    return _f1(hits, n_pred, len(g))


@dataclass
class SubtitleDiagnostic:
    index: int
    iou: float
    hits: dict[float, bool]
    empty: bool = False


@dataclass
class EvalReport:
    frame_acc: float
    f1: dict[float, float]
    per_subtitle: list[SubtitleDiagnostic] = field(default_factory=list)

    COLUMNS = ("frame-acc", "F1@.10", "F1@.25", "F1@.50")

    def row(self) -> list[float]:
        return [self.frame_acc] + [self.f1[t] for t in THRESHOLDS]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        w.writerow([repr(v) for v in self.row()])
        return buf.getvalue()

    def per_subtitle_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "iou"] + [f"hit@{t:.2f}" for t in THRESHOLDS])
        for d in self.per_subtitle:
            w.writerow([d.index, repr(d.iou)] + [int(d.hits[t]) for t in THRESHOLDS])
        return buf.getvalue()

    def table(self, label: str = "") -> str:
        head = f"{'':<24}" + "".join(f"{c:>11}" for c in self.COLUMNS)
        body = f"{label:<24}" + "".join(f"{100 * v:>11.2f}" for v in self.row())
        return head + "\n" + body + "\n"


def read_report_csv(text: str) -> tuple[float, dict[float, float]]:
    rows = list(csv.reader(io.StringIO(text)))
    values = [float(v) for v in rows[1]]
    return values[0], dict(zip(THRESHOLDS, values[1:]))


def evaluate(pred: Intervals, gt: Intervals, windows: Sequence[Window] | None = None,
             episode_ms: float | None = None, indices: Sequence[int] | None = None) -> EvalReport:
    """Frame accuracy (window mode, or timeline mode without windows) plus F1@IoU."""
    p, g = _aligned(pred, gt)
    if windows is not None:
        acc = frame_accuracy(p, g, windows)
    elif episode_ms is not None:
        acc = episode_frame_accuracy(p, g, episode_ms)
    else:
        raise MetricsError("frame accuracy needs evaluation windows or an episode length")
    f1 = {t: f1_at_iou(p, g, t) for t in THRESHOLDS}
    if indices is None:
        indices = range(1, len(g) + 1)
    diags = []
    for idx, pi, gi in zip(indices, p, g):
        iou = 0.0 if pi.is_empty() else interval_iou(pi, gi)
        diags.append(SubtitleDiagnostic(idx, iou, {t: (not pi.is_empty()) and iou >= t for t in THRESHOLDS},
                                        pi.is_empty()))
    return EvalReport(acc, f1, diags)


def pool_reports(reports: Sequence[EvalReport], weights: Sequence[int] | None = None) -> EvalReport:
    """Combine per-episode reports: frame accuracy weighted by subtitle count,
    F1 recomputed from pooled per-subtitle hits."""
    if not reports:
        raise MetricsError("no reports to pool")
    if weights is None:
        weights = [len(r.per_subtitle) for r in reports]
    acc = float(np.average([r.frame_acc for r in reports], weights=weights))
    diags = [d for r in reports for d in r.per_subtitle]
    f1 = {}
    for t in THRESHOLDS:
        hits = sum(d.hits[t] for d in diags)
        f1[t] = _f1(hits, sum(not d.empty for d in diags), len(diags))
    return EvalReport(acc, f1, diags)
