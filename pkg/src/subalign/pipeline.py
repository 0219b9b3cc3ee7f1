"""Episode inference, overlap resolution and evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from .corpus import Episode
from .features import hash_embed, sentence_embedding, tokenize
from .global_align import TAU_DTW, AlignmentResult, independent_track, resolve_track
from .metrics import EvalReport, evaluate, pool_reports
from .model import SubtitleAligner, collate
from .subtitles import Interval, SubtitleTrack, TrackKind
from .windowing import WindowConfig, encode_span, make_test_window

TAU = 0.5


@dataclass(frozen=True)
class TextConfig:
    d_text: int = 64
    positional: bool = False
    sentence_mode: bool = False

    def embed(self, text: str) -> np.ndarray:
        seq = hash_embed(tokenize(text), self.d_text, self.positional)
        if self.sentence_mode:
            seq = sentence_embedding(seq)
        return seq.embeddings


def infer_episode(model: SubtitleAligner, episode: Episode, prior: SubtitleTrack,
                  window_cfg: WindowConfig, text_cfg: TextConfig, tau: float = TAU,
                  window_offset_ms: float = 0.0, texts: Sequence[str] | None = None,
                  batch_size: int = 64) -> list[AlignmentResult]:
    """Run the model on every subtitle in a window centred on its prior."""
    if texts is None:
        texts = [s.text for s in prior]
    if len(texts) != len(prior):
        raise ValueError("one text per prior cue is required")
    windows = [make_test_window(p, episode.features, window_cfg, episode.episode_id,
                                window_offset_ms) for p in prior]
    priors = [encode_span(p.interval, w).astype(np.float32) for p, w in zip(prior, windows)]
    embeddings = [text_cfg.embed(t) for t in texts]
    model.eval()
    dtype = next(model.parameters()).dtype
    probs = []
    with torch.no_grad():
        for b0 in range(0, len(windows), batch_size):
            sl = slice(b0, b0 + batch_size)
            batch = collate(embeddings[sl], [w.features for w in windows[sl]], priors[sl],
                            [w.pad_mask for w in windows[sl]]).to(dtype)
            out = model(batch.text, batch.text_pad, batch.video, batch.prior, batch.frame_pad)
            probs.extend(out.double().numpy())
    return [AlignmentResult(w, p, s.interval, tau) for w, p, s in zip(windows, probs, prior)]


@dataclass
class EpisodeAlignment:
    results: list[AlignmentResult]
    pre_dtw: list[Interval]
    track: SubtitleTrack  # post-DTW (or thresholded, when DTW is off)


def align_episode(model: SubtitleAligner, episode: Episode, prior: SubtitleTrack,
                  window_cfg: WindowConfig, text_cfg: TextConfig, tau: float = TAU,
                  tau_dtw: float = TAU_DTW, use_dtw: bool = True,
                  window_offset_ms: float = 0.0, texts: Sequence[str] | None = None) -> EpisodeAlignment:
    results = infer_episode(model, episode, prior, window_cfg, text_cfg, tau,
                            window_offset_ms, texts)
    pre = [r.predicted for r in results]
    if use_dtw:
        track = resolve_track(results, prior, tau_dtw)
    else:
        track = independent_track(results, prior)
    return EpisodeAlignment(results, pre, track)


def evaluation_windows(episode: Episode, prior: SubtitleTrack, window_cfg: WindowConfig):
    return [make_test_window(p, episode.features, window_cfg, episode.episode_id) for p in prior]


def evaluate_episode(pred, episode: Episode, prior: SubtitleTrack,
                     window_cfg: WindowConfig) -> EvalReport:
    """Score ``pred`` against the episode's GT inside the prior-centred windows."""
    if episode.gt is None:
        raise ValueError(f"episode {episode.episode_id} has no ground truth")
    windows = evaluation_windows(episode, prior, window_cfg)
    return evaluate(pred, episode.gt, windows)


def evaluate_corpus(preds: Sequence, episodes: Sequence[Episode], priors: Sequence[SubtitleTrack],
                    window_cfg: WindowConfig) -> EvalReport:
    reports = [evaluate_episode(p, e, pr, window_cfg) for p, e, pr in zip(preds, episodes, priors)]
    return pool_reports(reports)


def count_overlaps(track_or_intervals) -> int:
    ivs = track_or_intervals.intervals if isinstance(track_or_intervals, SubtitleTrack) \
        else list(track_or_intervals)
    ivs = sorted((iv for iv in ivs if not iv.is_empty()), key=lambda iv: iv.start_ms)
    count = 0
    for i, a in enumerate(ivs):
        for b in ivs[i + 1:]:
            if b.start_ms >= a.end_ms:
                break
            count += 1
    return count


def prior_as_prediction(prior: SubtitleTrack) -> SubtitleTrack:
    return prior.with_kind(TrackKind.PREDICTED)
