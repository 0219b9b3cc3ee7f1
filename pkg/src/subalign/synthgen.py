"""Synthetic signing corpus with a learnable text/feature correspondence.

Every vocabulary word owns a fixed mean feature vector. A subtitle is a short
random word list; its signing is the (possibly reordered, partly dropped)
sequence of word motifs, each a run of noisy copies of the word's vector.
Runs of filler motifs (words outside the vocabulary) sit between subtitles
and at the episode edges, so signing activity alone does not reveal the
subtitle boundaries. The audio track is the ground truth moved earlier by a
random delay and with jittered duration.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .corpus import Episode, SpottingAnnotation
from .features import FeatureSequence
from .subtitles import Interval, Subtitle, SubtitleTrack, TrackKind

FPS = 25.0


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    vocab_size: int = 60
    d_video: int = 32
    motif_frames_mean: float = 12.0
    motif_frames_std: float = 3.0
    motif_frames_min: int = 4
    subtitle_len_range: tuple[int, int] = (3, 8)
    gap_frames_range: tuple[int, int] = (0, 15)
    edge_frames: int = 250
    num_fillers: int = 20
    reorder_prob: float = 0.3
    drop_token_prob: float = 0.1
    noise_scale: float = 0.5
    shift_mean_s: float = 3.2
    shift_std_s: float = 1.5
    dur_noise_std_s: float = 0.5
    zero_dur_change_prob: float = 0.3
    min_audio_ms: int = 200
    episodes: int = 48
    subs_per_episode: int = 15
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 2 or self.d_video < 1 or self.subs_per_episode < 1:
            raise SynthError("vocab_size, d_video and subs_per_episode must be positive")
        lo, hi = self.subtitle_len_range
        if not 1 <= lo <= hi:
            raise SynthError("bad subtitle_len_range")
        glo, ghi = self.gap_frames_range
        if not 0 <= glo <= ghi:
            raise SynthError("bad gap_frames_range")
        for name in ("motif_frames_std", "shift_std_s", "dur_noise_std_s", "noise_scale"):
            if getattr(self, name) < 0:
                raise SynthError(f"{name} must be non-negative")
        if not 0 <= self.reorder_prob <= 1 or not 0 <= self.drop_token_prob < 1:
            raise SynthError("probabilities must lie in [0, 1)")


@dataclass(frozen=True)
class Motif:
    word: str
    start_frame: int
    end_frame: int  # exclusive
    subtitle: int  # 0-based subtitle position, -1 for filler

    @property
    def midpoint_ms(self) -> int:
        return int(round((self.start_frame + self.end_frame) / 2 * 1000 / FPS))


@dataclass(frozen=True, eq=False)
class SynthEpisode(Episode):
    motifs: tuple[Motif, ...] = ()


def vocabulary(cfg: SynthConfig) -> list[str]:
    width = len(str(cfg.vocab_size - 1))
    return [f"w{i:0{width}d}" for i in range(cfg.vocab_size)]


def word_means(cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """Corpus-level mean vectors for vocabulary words and filler words."""
    rng = np.random.default_rng([cfg.seed, 0xF00D])
    return (rng.standard_normal((cfg.vocab_size, cfg.d_video)),
            rng.standard_normal((cfg.num_fillers, cfg.d_video)))


def _motif_len(cfg: SynthConfig, rng: np.random.Generator) -> int:
    n = rng.normal(cfg.motif_frames_mean, cfg.motif_frames_std)
    return int(np.clip(round(n), cfg.motif_frames_min, 3 * cfg.motif_frames_mean))


def gen_episode(cfg: SynthConfig, episode_seed: int, episode_id: str | None = None) -> SynthEpisode:
    vocab = vocabulary(cfg)
    means, fillers = word_means(cfg)
    rng = np.random.default_rng([cfg.seed, episode_seed])
    sigma = cfg.noise_scale  # word means have unit variance per channel
    pieces: list[np.ndarray] = []
    motifs: list[Motif] = []
    cursor = 0

    def emit(mean: np.ndarray, n: int, word: str, sub: int) -> None:
        nonlocal cursor
        pieces.append(mean + sigma * rng.standard_normal((n, cfg.d_video)))
        motifs.append(Motif(word, cursor, cursor + n, sub))
        cursor += n

    def filler_run(n_frames: int) -> None:
        while n_frames > 0:
            n = min(n_frames, _motif_len(cfg, rng))
            k = int(rng.integers(cfg.num_fillers))
            emit(fillers[k], n, f"<filler{k}>", -1)
            n_frames -= n

    filler_run(cfg.edge_frames)
    gt_subs = []
    lo, hi = cfg.subtitle_len_range
    for j in range(cfg.subs_per_episode):
        if j:
            filler_run(int(rng.integers(cfg.gap_frames_range[0], cfg.gap_frames_range[1] + 1)))
        ids = rng.integers(cfg.vocab_size, size=int(rng.integers(lo, hi + 1)))
        keep = rng.random(len(ids)) >= cfg.drop_token_prob
        if not keep.any():
            keep[int(rng.integers(len(ids)))] = True
        realised = list(ids[keep])
        if rng.random() < cfg.reorder_prob:
            rng.shuffle(realised)
        start = cursor
        for w in realised:
            emit(means[w], _motif_len(cfg, rng), vocab[w], j)
        gt_subs.append(Subtitle(j + 1, _ms(start), _ms(cursor), " ".join(vocab[w] for w in ids)))
    filler_run(cfg.edge_frames)

    frames = np.concatenate(pieces).astype(np.float32)
    features = FeatureSequence(frames, FPS)
    gt = SubtitleTrack(gt_subs, TrackKind.GROUND_TRUTH)
    audio = _audio_track(gt, cfg, rng, features.duration_ms)
    active = _active_segments(gt)
    return SynthEpisode(
        episode_id=episode_id or f"ep{episode_seed:04d}",
        features=features,
        audio=audio,
        gt=gt,
        active=tuple(active),
        vocab=tuple(vocab),
        motifs=tuple(motifs),
    )


def _ms(frame: float) -> int:
    return int(round(frame * 1000 / FPS))


def _audio_track(gt: SubtitleTrack, cfg: SynthConfig, rng: np.random.Generator,
                 episode_ms: int) -> SubtitleTrack:
    subs = []
    prev_end = 0
    for s in gt:
        shift = rng.normal(cfg.shift_mean_s, cfg.shift_std_s)
        if rng.random() < cfg.zero_dur_change_prob:
            ddur = 0.0
        else:
            ddur = rng.normal(0.0, cfg.dur_noise_std_s)
        start = int(round(s.start - 1000 * shift))
        dur = max(cfg.min_audio_ms, int(round(s.duration + 1000 * ddur)))
        start = max(start, 0, prev_end)
        end = start + dur
        if end > episode_ms:
            raise SynthError(
                f"audio cue {s.index} ends at {end} ms, past the episode end ({episode_ms} ms)"
            )
        subs.append(replace(s, start=start, end=end))
        prev_end = end
    return SubtitleTrack(subs, TrackKind.AUDIO)


def _active_segments(gt: SubtitleTrack, bridge_ms: int = 200) -> list[Interval]:
    segs: list[list[int]] = []
    for s in gt:
        if segs and s.start - segs[-1][1] <= bridge_ms:
            segs[-1][1] = max(segs[-1][1], s.end)
        else:
            segs.append([s.start, s.end])
    return [Interval(a, b) for a, b in segs]


def gen_corpus(cfg: SynthConfig, n: int | None = None, offset: int = 0) -> list[SynthEpisode]:
    n = cfg.episodes if n is None else n
    return [gen_episode(cfg, offset + i) for i in range(n)]


def perturb_track(gt: SubtitleTrack, sigma_pos_s: float, sigma_dur_s: float, seed,
                  min_dur_ms: int = 200) -> SubtitleTrack:
    """Random midpoint shift and additive duration change per cue (may overlap)."""
    if sigma_pos_s < 0 or sigma_dur_s < 0:
        raise ValueError("perturbation sigmas must be non-negative")
    if sigma_pos_s == 0 and sigma_dur_s == 0:
        return gt.with_kind(TrackKind.PRIOR)
    rng = np.random.default_rng(seed)
    subs = []
    for s in gt:
        mid = s.midpoint + 1000 * rng.normal(0.0, sigma_pos_s) if sigma_pos_s else s.midpoint
        dur = s.duration + 1000 * rng.normal(0.0, sigma_dur_s) if sigma_dur_s else s.duration
        dur = max(min_dur_ms, int(round(dur)))
        start = max(0, int(round(mid - dur / 2)))
        subs.append(replace(s, start=start, end=start + dur))
    return SubtitleTrack(subs, TrackKind.PRIOR)


def gen_spottings(episode: SynthEpisode, recall: float, seed) -> list[SpottingAnnotation]:
    """Spottings for a ``recall`` fraction of the realised word motifs."""
    if not 0 < recall <= 1:
        raise ValueError("recall must be in (0, 1]")
    rng = np.random.default_rng(seed)
    out = []
    for m in episode.motifs:
        if m.subtitle < 0:
            continue
        if recall < 1 and rng.random() >= recall:
            continue
        out.append(SpottingAnnotation(m.word, m.midpoint_ms, float(rng.uniform(0.8, 1.0)),
                                      episode.episode_id))
    return out


def with_spottings(episode: SynthEpisode, spottings: Sequence[SpottingAnnotation]) -> SynthEpisode:
    return replace(episode, spottings=tuple(spottings))
