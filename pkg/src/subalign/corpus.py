"""Episode bundles and the small line-oriented side files.

An episode directory holds::

    features.bin      feature container
    audio.srt         audio-aligned subtitles
    gt.srt            signing-aligned subtitles (optional at inference time)
    spottings.tsv     episode_id, word, time_ms, confidence
    active.tsv        start_ms, end_ms
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .features import FeatureSequence, load_features, save_features
from .subtitles import Interval, SubtitleTrack, TrackKind, read_srt, write_srt


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class SpottingAnnotation:
    word: str
    time_ms: int
    confidence: float
    episode_id: str = ""

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise CorpusError(f"spotting confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True, eq=False)
class Episode:
    episode_id: str
    features: FeatureSequence
    audio: SubtitleTrack
    gt: SubtitleTrack | None = None
    spottings: tuple[SpottingAnnotation, ...] = ()
    active: tuple[Interval, ...] = ()
    vocab: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.gt is not None and len(self.gt) != len(self.audio):
            raise CorpusError(
                f"episode {self.episode_id}: {len(self.gt)} GT cues vs {len(self.audio)} audio cues"
            )
        for s in self.spottings:
            if not 0 <= s.time_ms <= self.features.duration_ms:
                raise CorpusError(f"spotting {s.word}@{s.time_ms} outside episode")

    @property
    def duration_ms(self) -> int:
        return self.features.duration_ms


def write_spottings(path, spottings: Iterable[SpottingAnnotation]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in spottings:
            fh.write(f"{s.episode_id}\t{s.word}\t{s.time_ms}\t{s.confidence!r}\n")


def read_spottings(path) -> list[SpottingAnnotation]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise CorpusError(f"{path}:{lineno}: expected 4 tab-separated fields")
            try:
                out.append(SpottingAnnotation(parts[1], int(parts[2]), float(parts[3]), parts[0]))
            except ValueError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
    return out


def write_active_segments(path, segments: Iterable[Interval]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for seg in segments:
            fh.write(f"{seg.start_ms}\t{seg.end_ms}\n")


def read_active_segments(path) -> list[Interval]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusError(f"{path}:{lineno}: expected start_ms<TAB>end_ms")
            seg = Interval(int(parts[0]), int(parts[1]))
            if seg.is_empty():
                raise CorpusError(f"{path}:{lineno}: empty active segment")
            out.append(seg)
    out.sort(key=lambda s: s.start_ms)
    for a, b in zip(out, out[1:]):
        if b.start_ms < a.end_ms:
            raise CorpusError(f"{path}: active segments overlap")
    return out


def save_episode(episode: Episode, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_features(d / "features.bin", episode.features)
    write_srt(episode.audio, d / "audio.srt")
    if episode.gt is not None:
        write_srt(episode.gt, d / "gt.srt")
    write_spottings(d / "spottings.tsv", episode.spottings)
    write_active_segments(d / "active.tsv", episode.active)
    return d


def load_episode(directory, episode_id: str | None = None) -> Episode:
    d = Path(directory)
    episode_id = episode_id or d.name
    gt_path = d / "gt.srt"
    spot_path = d / "spottings.tsv"
    act_path = d / "active.tsv"
    return Episode(
        episode_id=episode_id,
        features=load_features(d / "features.bin"),
        audio=read_srt(d / "audio.srt", TrackKind.AUDIO),
        gt=read_srt(gt_path, TrackKind.GROUND_TRUTH) if gt_path.exists() else None,
        spottings=tuple(read_spottings(spot_path)) if spot_path.exists() else (),
        active=tuple(read_active_segments(act_path)) if act_path.exists() else (),
    )


def load_corpus(directory) -> list[Episode]:
    """Every episode sub-directory (containing features.bin), in name order."""
    root = Path(directory)
    dirs = sorted(p for p in root.iterdir() if (p / "features.bin").exists())
    if not dirs:
        raise CorpusError(f"no episodes under {root}")
    return [load_episode(p) for p in dirs]


def write_loss_log(path, rows: Iterable[tuple[int, str, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "phase", "mean_loss"])
        for epoch, phase, loss in rows:
            w.writerow([epoch, phase, repr(float(loss))])


def read_loss_log(path) -> list[tuple[int, str, float]]:
    with open(path, newline="") as fh:
        return [(int(r["epoch"]), r["phase"], float(r["mean_loss"])) for r in csv.DictReader(fh)]
