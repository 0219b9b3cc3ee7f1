"""Word pretraining and subtitle finetuning loops, text augmentation and Adam."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from .corpus import Episode, SpottingAnnotation
from .features import hash_embed, sentence_embedding, tokenize
from .model import SubtitleAligner, batch_loss, collate, gradients, NonFiniteError
from .subtitles import Interval, SubtitleTrack, shift_track
from .windowing import Window, WindowConfig, encode_span, make_train_window

log = logging.getLogger(__name__)

PRIOR_SHIFT_MS = 3200


class TrainingError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    lr_pretrain: float = 1e-5
    lr_finetune: float = 5e-6
    pretrain_epochs: int = 5
    finetune_epochs: int = 80
    augment_prob: float = 0.5
    max_word_edits: int = 2
    augment_vocab: str = "corpus"  # or "subtitle"
    seed: int = 0
    confidence_floor: float = 0.8
    prior_shift_ms: int = PRIOR_SHIFT_MS
    d_text: int = 768
    text_positional: bool = False
    sentence_mode: bool = False
    random_subtitle: bool = False

    def __post_init__(self):
        if not 0.0 <= self.augment_prob <= 1.0:
            raise ValueError("augment_prob must be in [0, 1]")
        if self.lr_pretrain <= 0 or self.lr_finetune <= 0:
            raise ValueError("learning rates must be positive")
        if self.augment_vocab not in ("corpus", "subtitle"):
            raise ValueError("augment_vocab must be 'corpus' or 'subtitle'")


# -- text augmentation ---------------------------------------------------------


def augment_text(tokens: Sequence[str], vocab: Sequence[str], rng: np.random.Generator,
                 augment_prob: float = 0.5, max_edits: int = 2) -> list[str]:
    """Shuffle, then insert and delete up to ``max_edits`` words each.

    Applied with probability ``augment_prob``; deletions never empty the list.
    """
    if not vocab:
        raise TrainingError("augmentation vocabulary is empty")
    out = list(tokens)
    if rng.random() >= augment_prob:
        return out
    rng.shuffle(out)
    k_add = int(rng.integers(0, max_edits + 1))
    k_del = int(rng.integers(0, max_edits + 1))
    for _ in range(k_add):
        word = vocab[int(rng.integers(len(vocab)))]
        out.insert(int(rng.integers(len(out) + 1)), word)
    for _ in range(k_del):
        if len(out) <= 1:
            break
        del out[int(rng.integers(len(out)))]
    return out


# -- targets -------------------------------------------------------------------

WORD_HALF_WIDTH_MS = 500


def word_interval(time_ms: int) -> Interval:
    return Interval(time_ms - WORD_HALF_WIDTH_MS, time_ms + WORD_HALF_WIDTH_MS)


def word_target(spot: SpottingAnnotation, window: Window) -> np.ndarray:
    """Ones on the frames meeting the assumed one-second sign extent."""
    if not window.start_ms <= spot.time_ms < window.end_ms:
        raise TrainingError(
            f"spotting {spot.word}@{spot.time_ms} ms outside window "
            f"[{window.start_ms:.0f}, {window.end_ms:.0f})"
        )
    return encode_span(word_interval(spot.time_ms), window).astype(np.float32)


# -- Adam ----------------------------------------------------------------------


@dataclass
class OptimizerState:
    m: list[torch.Tensor]
    v: list[torch.Tensor]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Sequence[torch.Tensor]) -> "OptimizerState":
        return cls([torch.zeros_like(p) for p in params], [torch.zeros_like(p) for p in params])


def adam_step(params: Sequence[torch.Tensor], grads: Sequence[torch.Tensor],
              state: OptimizerState, lr: float):
    """One bias-corrected Adam update, applied in place; returns (params, state)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state disagree in length")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or p.shape != state.m[i].shape:
            raise ValueError(f"shape mismatch for parameter {i}: {tuple(p.shape)} vs {tuple(g.shape)}")
        if not torch.isfinite(g).all():
            raise NonFiniteError(f"non-finite gradient for parameter {i}; step aborted")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1 ** state.step
    c2 = 1 - b2 ** state.step
    with torch.no_grad():
        for p, g, m, v in zip(params, grads, state.m, state.v):
            m.mul_(b1).add_(g, alpha=1 - b1)
            v.mul_(b2).addcmul_(g, g, value=1 - b2)
            p.sub_(lr * (m / c1) / ((v / c2).sqrt() + state.eps))
    return params, state


# -- shared loop -----------------------------------------------------------------


@dataclass
class Sample:
    text: np.ndarray
    video: np.ndarray
    prior: np.ndarray
    frame_pad: np.ndarray
    target: np.ndarray


@dataclass
class TrainResult:
    model: SubtitleAligner
    loss_log: list[tuple[int, str, float]] = field(default_factory=list)
    batch_losses: list[float] = field(default_factory=list)


class _Embedder:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg

    def __call__(self, tokens: Sequence[str]) -> np.ndarray:
        seq = hash_embed(tokens, self.cfg.d_text, self.cfg.text_positional)
        if self.cfg.sentence_mode:
            seq = sentence_embedding(seq)
        return seq.embeddings


def _run_epochs(model: SubtitleAligner, n_samples: int, build: Callable[[int, int, np.random.Generator], Sample],
                epochs: int, lr: float, cfg: TrainConfig, phase: str,
                rng: np.random.Generator, result: TrainResult) -> None:
    params = [p for p in model.parameters()]
    state = OptimizerState.zeros_like(params)
    model.train()
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n_samples)
        losses = []
        for b0 in range(0, n_samples, cfg.batch_size):
            samples = [build(int(i), epoch, rng) for i in order[b0 : b0 + cfg.batch_size]]
            batch = collate([s.text for s in samples], [s.video for s in samples],
                            [s.prior for s in samples], [s.frame_pad for s in samples],
                            [s.target for s in samples])
            model.zero_grad(set_to_none=True)
            loss = batch_loss(model, batch)
            loss.backward()
            grads = gradients(model)
            adam_step(params, [grads[n] for n, _ in model.named_parameters()], state, lr)
            losses.append(loss.item())
            result.batch_losses.append(loss.item())
        mean = float(np.mean(losses))
        result.loss_log.append((epoch, phase, mean))
        log.info("%s epoch %d/%d loss %.4f", phase, epoch, epochs, mean)
    model.eval()


def pretrain_words(model: SubtitleAligner, spottings: Sequence[SpottingAnnotation],
                   episodes: Sequence[Episode], cfg: TrainConfig,
                   window_cfg: WindowConfig = WindowConfig(),
                   epochs: int | None = None) -> TrainResult:
    """Train the model to localise single spotted signs (one-second targets)."""
    by_id = {e.episode_id: e for e in episodes}
    spots = [s for s in spottings if s.confidence >= cfg.confidence_floor]
    if not spots:
        raise TrainingError("no spottings at or above the confidence floor")
    for s in spots:
        if s.episode_id not in by_id:
            raise TrainingError(f"spotting refers to unknown episode {s.episode_id!r}")
    embed = _Embedder(cfg)
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)

    def build(i: int, epoch: int, rng: np.random.Generator) -> Sample:
        spot = spots[i]
        ep = by_id[spot.episode_id]
        # place the window so the spotted instant is inside it
        win = make_train_window(Interval(spot.time_ms, spot.time_ms + 1), ep.features, rng,
                                window_cfg, ep.episode_id)
        return Sample(embed([spot.word]), win.features, np.zeros(win.T, np.float32),
                      win.pad_mask, word_target(spot, win))

    result = TrainResult(model)
    _run_epochs(model, len(spots), build, cfg.pretrain_epochs if epochs is None else epochs,
                cfg.lr_pretrain, cfg, "pretrain", rng, result)
    return result


PriorSampler = Callable[[int, int, np.random.Generator], SubtitleTrack]


def finetune_subtitles(model: SubtitleAligner, episodes: Sequence[Episode],
                       gt_tracks: Sequence[SubtitleTrack], audio_tracks: Sequence[SubtitleTrack],
                       cfg: TrainConfig, window_cfg: WindowConfig = WindowConfig(),
                       prior_sampler: PriorSampler | None = None,
                       epochs: int | None = None) -> TrainResult:
    """Train on subtitle queries with the shifted audio timings as prior.

    ``prior_sampler(episode_index, epoch, rng)`` overrides the prior track, e.g.
    for perturbed-prior training.
    """
    if not (len(episodes) == len(gt_tracks) == len(audio_tracks)):
        raise TrainingError("episodes, GT tracks and audio tracks differ in count")
    for ep, gt, au in zip(episodes, gt_tracks, audio_tracks):
        if len(gt) != len(au):
            raise TrainingError(f"episode {ep.episode_id}: GT and audio tracks not index-aligned")
    priors = [shift_track(a, cfg.prior_shift_ms) for a in audio_tracks]
    index = [(e, j) for e, gt in enumerate(gt_tracks) for j in range(len(gt))]
    if not index:
        raise TrainingError("no subtitles to train on")
    token_lists = [[tokenize(s.text) for s in gt] for gt in gt_tracks]
    corpus_vocab = sorted({t for toks in token_lists for tl in toks for t in tl})
    embed = _Embedder(cfg)
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    prior_cache: dict[tuple[int, int], SubtitleTrack] = {}

    def prior_track(e: int, epoch: int, rng: np.random.Generator) -> SubtitleTrack:
        if prior_sampler is None:
            return priors[e]
        # one prior draw per episode and epoch
        key = (e, epoch)
        if key not in prior_cache:
            for stale in [k for k in prior_cache if k[1] != epoch]:
                del prior_cache[stale]
            prior_cache[key] = prior_sampler(e, epoch, rng)
        return prior_cache[key]

    def build(i: int, epoch: int, rng: np.random.Generator) -> Sample:
        e, j = index[i]
        ep = episodes[e]
        gt = gt_tracks[e][j]
        win = make_train_window(gt, ep.features, rng, window_cfg, ep.episode_id)
        prior = encode_span(prior_track(e, epoch, rng)[j].interval, win)
        if cfg.random_subtitle:
            re_, rj = index[int(rng.integers(len(index)))]
            tokens = token_lists[re_][rj]
        else:
            tokens = token_lists[e][j]
        vocab = corpus_vocab if cfg.augment_vocab == "corpus" else tokens
        tokens = augment_text(tokens, vocab, rng, cfg.augment_prob, cfg.max_word_edits)
        target = encode_span(gt.interval, win).astype(np.float32)
        return Sample(embed(tokens), win.features, prior.astype(np.float32), win.pad_mask, target)

    result = TrainResult(model)
    _run_epochs(model, len(index), build, cfg.finetune_epochs if epochs is None else epochs,
                cfg.lr_finetune, cfg, "finetune", rng, result)
    return result
