"""Search windows over an episode, time/frame conversion and span coding.

A window holds ``T`` subsampled frames. Window frame ``k`` is source frame
``start_frame + k * stride`` and covers the half-open time span
``[(start_frame + k*stride) / fps, (start_frame + (k+1)*stride) / fps)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .features import FeatureSequence
from .subtitles import Interval, Subtitle


@dataclass(frozen=True)
class WindowConfig:
    window_seconds: float = 20.0
    source_fps: float = 25.0
    subsample_stride: int = 4
    # training windows must contain the whole GT cue when it fits
    contain_gt: bool = True

    def __post_init__(self):
        if self.subsample_stride < 1:
            raise ValueError("subsample_stride must be positive")
        if self.T < 8:
            raise ValueError(f"window of {self.T} frames is too short (minimum 8)")

    @property
    def T(self) -> int:
        return int(round(self.window_seconds * self.source_fps / self.subsample_stride))

    @property
    def span_frames(self) -> int:
        """Window extent in source frames."""
        return self.T * self.subsample_stride

    @property
    def frame_ms(self) -> float:
        return self.subsample_stride * 1000.0 / self.source_fps


@dataclass(frozen=True, eq=False)
class Window:
    episode_id: str
    start_frame: int
    T: int
    stride: int
    fps: float
    features: np.ndarray
    pad_mask: np.ndarray
    episode_frames: int

    def frame_start_ms(self, k) -> np.ndarray | float:
        return (self.start_frame + np.asarray(k) * self.stride) * 1000.0 / self.fps

    def frame_end_ms(self, k) -> np.ndarray | float:
        return (self.start_frame + (np.asarray(k) + 1) * self.stride) * 1000.0 / self.fps

    @property
    def start_ms(self) -> float:
        return self.start_frame * 1000.0 / self.fps

    @property
    def end_ms(self) -> float:
        return (self.start_frame + self.T * self.stride) * 1000.0 / self.fps

    @property
    def episode_ms(self) -> float:
        return self.episode_frames * 1000.0 / self.fps

    @classmethod
    def timing_only(cls, start_frame: int, cfg: "WindowConfig", episode_frames: int = 0,
                    episode_id: str = "") -> "Window":
        """A featureless window, enough for span coding and evaluation."""
        return cls(episode_id, int(start_frame), cfg.T, cfg.subsample_stride, cfg.source_fps,
                   np.zeros((cfg.T, 0), np.float32), np.zeros(cfg.T, bool), episode_frames)

    @property
    def grid_index(self) -> np.ndarray:
        """Episode-level index of each window frame on the stride grid."""
        return (self.start_frame + np.arange(self.T) * self.stride) // self.stride


def extract_window(episode: FeatureSequence, start_frame: int, cfg: WindowConfig,
                   episode_id: str = "") -> Window:
    """Subsample ``cfg.T`` frames from ``start_frame``; zero-pad beyond the episode."""
    idx = start_frame + np.arange(cfg.T) * cfg.subsample_stride
    valid = (idx >= 0) & (idx < episode.num_frames)
    feats = np.zeros((cfg.T, episode.d_video), dtype=np.float32)
    feats[valid] = episode.frames[idx[valid]]
    return Window(
        episode_id=episode_id,
        start_frame=int(start_frame),
        T=cfg.T,
        stride=cfg.subsample_stride,
        fps=episode.fps,
        features=feats,
        pad_mask=~valid,
        episode_frames=episode.num_frames,
    )


def time_to_window_frame(t_ms: float, window: Window) -> int | None:
    """Window frame containing time ``t_ms``, or None when outside the window."""
    k = math.floor((t_ms / 1000.0 * window.fps - window.start_frame) / window.stride)
    if 0 <= k < window.T:
        return k
    return None


def make_train_window(gt: Subtitle | Interval, episode: FeatureSequence,
                      rng: np.random.Generator, cfg: WindowConfig = WindowConfig(),
                      episode_id: str = "") -> Window:
    """Random window placed uniformly around a ground-truth cue.

    With ``cfg.contain_gt`` every admissible placement contains the cue; cues
    longer than the window get a window centred on their midpoint instead.
    Without it, any placement that overlaps the cue is admissible.
    """
    iv = gt.interval if isinstance(gt, Subtitle) else gt
    fps = episode.fps
    gs = iv.start_ms * fps / 1000.0
    ge = iv.end_ms * fps / 1000.0
    span = cfg.span_frames
    if cfg.contain_gt:
        lo, hi = math.ceil(ge - span), math.floor(gs)
    else:
        lo, hi = math.floor(gs - span) + 1, math.ceil(ge) - 1
    if lo > hi:
        start = int(round((gs + ge) / 2 - span / 2))
    else:
        start = int(rng.integers(lo, hi + 1))
    return extract_window(episode, start, cfg, episode_id)


def centered_window_start(center_ms: float, cfg: WindowConfig, fps: float) -> int:
    """Start frame of a window centred on ``center_ms``, snapped to the stride grid."""
    raw = center_ms * fps / 1000.0 - cfg.span_frames / 2
    return int(cfg.subsample_stride * round(raw / cfg.subsample_stride))


def make_test_window(prior: Subtitle | Interval, episode: FeatureSequence,
                     cfg: WindowConfig = WindowConfig(), episode_id: str = "",
                     offset_ms: float = 0.0) -> Window:
    """Deterministic window centred on the prior cue's midpoint (plus ``offset_ms``)."""
    iv = prior.interval if isinstance(prior, Subtitle) else prior
    start = centered_window_start(iv.midpoint + offset_ms, cfg, episode.fps)
    return extract_window(episode, start, cfg, episode_id)


def encode_span(interval: Interval, window: Window) -> np.ndarray:
    """Boolean length-T vector, true on frames whose span meets ``interval``."""
    if interval.is_empty():
        return np.zeros(window.T, dtype=bool)
    k = np.arange(window.T)
    lo = np.maximum(window.frame_start_ms(k), interval.start_ms)
    hi = np.minimum(window.frame_end_ms(k), interval.end_ms)
    return lo < hi


def decode_span(values, tau: float, window: Window) -> Interval:
    """First-to-last frame strictly above ``tau`` as an episode interval.

    Interior gaps are ignored. The result is clipped to the episode extent;
    no frame above ``tau`` gives an empty interval.
    """
    values = np.asarray(values)
    if values.shape != (window.T,):
        raise ValueError(f"expected {window.T} values, got shape {values.shape}")
    above = np.flatnonzero(values > tau)
    if above.size == 0:
        return Interval.empty(max(0, int(round(window.start_ms))))
    start = float(window.frame_start_ms(above[0]))
    end = float(window.frame_end_ms(above[-1]))
    start = min(max(start, 0.0), window.episode_ms)
    end = min(max(end, 0.0), window.episode_ms)
    start_i, end_i = int(round(start)), int(round(end))
    if end_i <= start_i:
        return Interval.empty(start_i)
    return Interval(start_i, end_i)
