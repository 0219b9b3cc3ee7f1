"""Subtitle data model, SRT reading/writing and interval arithmetic.

All timings are integer milliseconds. Frame quantities are derived on demand
by the windowing module.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Sequence

MAX_TIMECODE_MS = (99 * 3600 + 59 * 60 + 59) * 1000 + 999

_TIMECODE_RE = re.compile(r"^(\d{2}):(\d{2}):(\d{2}),(\d{3})$")
_TIMING_LINE_RE = re.compile(r"^\s*(\S+)\s+-->\s+(\S+)\s*$")


class SubtitleError(ValueError):
    """Raised for invalid subtitle data."""


class SRTParseError(SubtitleError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyTrackError(SubtitleError):
    pass


class OverlapError(SubtitleError):
    def __init__(self, first: "Subtitle", second: "Subtitle"):
        self.first = first
        self.second = second
        super().__init__(
            f"subtitle {first.index} [{format_timecode(first.start)} - "
            f"{format_timecode(first.end)}] overlaps subtitle {second.index} "
            f"[{format_timecode(second.start)} - {format_timecode(second.end)}]"
        )


@dataclass(frozen=True, order=True)
class TimeCode:
    milliseconds: int

    def __post_init__(self):
        if not 0 <= self.milliseconds <= MAX_TIMECODE_MS:
            raise SubtitleError(f"timecode out of range: {self.milliseconds} ms")

    def __str__(self) -> str:
        return format_timecode(self.milliseconds)

    @classmethod
    def parse(cls, text: str) -> "TimeCode":
        return cls(parse_timecode(text))


def format_timecode(ms: int) -> str:
    if not 0 <= ms <= MAX_TIMECODE_MS:
        raise SubtitleError(f"timecode out of range: {ms} ms")
    hours, rest = divmod(ms, 3_600_000)
    minutes, rest = divmod(rest, 60_000)
    seconds, millis = divmod(rest, 1000)
    return f"{hours:02d}:{minutes:02d}:{seconds:02d},{millis:03d}"


def parse_timecode(text: str) -> int:
    match = _TIMECODE_RE.match(text)
    if match is None:
        raise SubtitleError(f"malformed timecode {text!r}")
    hours, minutes, seconds, millis = (int(g) for g in match.groups())
    if minutes > 59 or seconds > 59:
        raise SubtitleError(f"malformed timecode {text!r}")
    return ((hours * 60 + minutes) * 60 + seconds) * 1000 + millis


class TrackKind(str, enum.Enum):
    AUDIO = "audio"
    GROUND_TRUTH = "ground_truth"
    PREDICTED = "predicted"
    PRIOR = "prior"


@dataclass(frozen=True)
class Interval:
    start_ms: int
    end_ms: int

    def __post_init__(self):
        if self.start_ms > self.end_ms:
            raise SubtitleError(f"interval start {self.start_ms} > end {self.end_ms}")

    @property
    def duration(self) -> int:
        return self.end_ms - self.start_ms

    @property
    def midpoint(self) -> float:
        return (self.start_ms + self.end_ms) / 2

    def is_empty(self) -> bool:
        return self.start_ms == self.end_ms

    @classmethod
    def empty(cls, at: int = 0) -> "Interval":
        return cls(at, at)


@dataclass(frozen=True)
class Subtitle:
    index: int
    start: int
    end: int
    text: str

    def __post_init__(self):
        if self.index < 1:
            raise SubtitleError(f"subtitle index must be positive, got {self.index}")
        if not 0 <= self.start < self.end:
            raise SubtitleError(
                f"subtitle {self.index}: start {self.start} ms must be >= 0 and "
                f"before end {self.end} ms"
            )
        if self.end > MAX_TIMECODE_MS:
            raise SubtitleError(f"subtitle {self.index}: end beyond 99:59:59,999")
        if not self.text.strip():
            raise SubtitleError(f"subtitle {self.index}: empty text")
        if "\r" in self.text:
            raise SubtitleError(f"subtitle {self.index}: carriage return in text")

    @property
    def interval(self) -> Interval:
        return Interval(self.start, self.end)

    @property
    def duration(self) -> int:
        return self.end - self.start

    @property
    def midpoint(self) -> float:
        return (self.start + self.end) / 2


@dataclass(frozen=True)
class SubtitleTrack:
    subtitles: tuple[Subtitle, ...] = ()
    kind: TrackKind = TrackKind.AUDIO

    def __post_init__(self):
        object.__setattr__(self, "subtitles", tuple(self.subtitles))
        object.__setattr__(self, "kind", TrackKind(self.kind))
        if self.kind in (TrackKind.AUDIO, TrackKind.GROUND_TRUTH):
            check_ordered_non_overlapping(self.subtitles)

    def __len__(self) -> int:
        return len(self.subtitles)

    def __iter__(self) -> Iterator[Subtitle]:
        return iter(self.subtitles)

    def __getitem__(self, i: int) -> Subtitle:
        return self.subtitles[i]

    @property
    def intervals(self) -> list[Interval]:
        return [s.interval for s in self.subtitles]

    def with_kind(self, kind: TrackKind | str) -> "SubtitleTrack":
        return SubtitleTrack(self.subtitles, TrackKind(kind))

    def with_intervals(
        self, intervals: Sequence[Interval], kind: TrackKind | str | None = None
    ) -> "SubtitleTrack":
        """Copy of this track with new timings, keeping index and text."""
        if len(intervals) != len(self.subtitles):
            raise SubtitleError("interval count does not match track length")
        subs = [
            replace(s, start=iv.start_ms, end=iv.end_ms)
            for s, iv in zip(self.subtitles, intervals)
        ]
        return SubtitleTrack(subs, TrackKind(kind) if kind is not None else self.kind)


def find_overlaps(subtitles: Iterable[Subtitle]) -> list[tuple[Subtitle, Subtitle]]:
    """All pairs of subtitles whose intervals share positive-length time."""
    ordered = sorted(subtitles, key=lambda s: (s.start, s.end))
    pairs = []
    for i, a in enumerate(ordered):
        for b in ordered[i + 1 :]:
            if b.start >= a.end:
                break
            pairs.append((a, b))
    return pairs


def check_ordered_non_overlapping(subtitles: Sequence[Subtitle]) -> None:
    for prev, cur in zip(subtitles, subtitles[1:]):
        if cur.start < prev.start:
            raise SubtitleError(
                f"subtitle {cur.index} starts before subtitle {prev.index}"
            )
        if cur.start < prev.end:
            raise OverlapError(prev, cur)


def parse_srt(data: bytes, kind: TrackKind | str = TrackKind.AUDIO) -> SubtitleTrack:
    """Parse SRT bytes (UTF-8, optional BOM) into a track.

    Cue text lines are joined with single spaces and indices renumbered 1..N.
    """
    text = data.decode("utf-8-sig")
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    if not any(line.strip() for line in lines):
        raise EmptyTrackError("empty subtitle file")

    subs: list[Subtitle] = []
    i = 0
    n = len(lines)
    while i < n:
        if not lines[i].strip():
            i += 1
            continue
        block_start = i
        # optional numeric index line
        if lines[i].strip().isdigit():
            i += 1
        if i >= n or "-->" not in lines[i]:
            raise SRTParseError("expected timecode line", i + 1)
        match = _TIMING_LINE_RE.match(lines[i])
        if match is None:
            raise SRTParseError(f"malformed timecode line {lines[i]!r}", i + 1)
        try:
            start = parse_timecode(match.group(1))
            end = parse_timecode(match.group(2))
        except SubtitleError as exc:
            raise SRTParseError(str(exc), i + 1) from None
        if start >= end:
            raise SRTParseError(
                f"cue start {match.group(1)} is not before end {match.group(2)}", i + 1
            )
        timing_line = i + 1
        i += 1
        text_lines = []
        while i < n and lines[i].strip():
            text_lines.append(lines[i].strip())
            i += 1
        if not text_lines:
            raise SRTParseError("cue without text", block_start + 1)
        try:
            subs.append(Subtitle(len(subs) + 1, start, end, " ".join(text_lines)))
        except SubtitleError as exc:
            raise SRTParseError(str(exc), timing_line) from None

    try:
        return SubtitleTrack(subs, kind)
    except OverlapError:
        raise
    except SubtitleError as exc:
        raise SRTParseError(str(exc)) from None


def serialize_srt(track: SubtitleTrack, allow_overlaps: bool = False) -> bytes:
    """SRT bytes for ``track``.

    Predicted tracks must be overlap-free unless ``allow_overlaps`` is set
    (used for raw per-subtitle predictions).
    """
    if track.kind == TrackKind.PREDICTED and not allow_overlaps:
        overlaps = find_overlaps(track.subtitles)
        if overlaps:
            raise OverlapError(*overlaps[0])
    out = []
    for sub in track.subtitles:
        out.append(
            f"{sub.index}\n{format_timecode(sub.start)} --> "
            f"{format_timecode(sub.end)}\n{sub.text}\n\n"
        )
    return "".join(out).encode("utf-8")


def read_srt(path, kind: TrackKind | str = TrackKind.AUDIO) -> SubtitleTrack:
    with open(path, "rb") as fh:
        return parse_srt(fh.read(), kind)


def write_srt(track: SubtitleTrack, path, allow_overlaps: bool = False) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_srt(track, allow_overlaps))


def shift_track(track: SubtitleTrack, delta_ms: int) -> SubtitleTrack:
    """Offset every cue by ``delta_ms``; times below zero are clamped to 0.

    A cue pushed entirely below zero keeps a 1 ms duration so it stays valid.
    """
    subs = []
    for s in track.subtitles:
        start = max(0, s.start + delta_ms)
        end = max(0, s.end + delta_ms)
        if end <= start:
            end = start + 1
        subs.append(replace(s, start=start, end=end))
    return SubtitleTrack(subs, track.kind)


def interval_iou(a: Interval, b: Interval) -> float:
    inter = max(0, min(a.end_ms, b.end_ms) - max(a.start_ms, b.start_ms))
    union = a.duration + b.duration - inter
    if union <= 0:
        return 0.0
    return inter / union
