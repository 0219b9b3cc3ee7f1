"""Desk-scale synthetic experiments: train, align held-out episodes, compare to the prior."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .config import profile_defaults
from .metrics import EvalReport
from .model import ModelConfig, SubtitleAligner, init_params
from .pipeline import TextConfig, align_episode, count_overlaps, evaluate_corpus
from .subtitles import SubtitleTrack, shift_track
from .synthgen import SynthConfig, SynthEpisode, gen_episode, gen_spottings, perturb_track, with_spottings
from .training import TrainConfig, finetune_subtitles, pretrain_words
from .windowing import WindowConfig

log = logging.getLogger(__name__)

TEST_SEED_OFFSET = 100_000


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig
    train: TrainConfig
    window: WindowConfig = WindowConfig()
    synth: SynthConfig = SynthConfig(d_video=32)
    n_train: int = 40
    n_test: int = 8
    spot_recall: float = 0.5
    pretrain: bool = True
    tau: float = 0.5
    tau_dtw: float = 0.4

    @property
    def text(self) -> TextConfig:
        return TextConfig(self.train.d_text, self.train.text_positional, self.train.sentence_mode)


def desk_experiment(**overrides) -> ExperimentConfig:
    model, train, window, synth = profile_defaults("desk")
    synth = replace(synth, shift_mean_s=3.2, shift_std_s=1.5, dur_noise_std_s=0.5,
                    subs_per_episode=15)
    exp = ExperimentConfig(model=model, train=train, window=window, synth=synth)
    return replace(exp, **overrides)


@dataclass
class Corpus:
    train: list[SynthEpisode]
    test: list[SynthEpisode]


def build_corpus(exp: ExperimentConfig, seed: int) -> Corpus:
    synth = replace(exp.synth, seed=seed)

    def make(i: int) -> SynthEpisode:
        ep = gen_episode(synth, i)
        return with_spottings(ep, gen_spottings(ep, exp.spot_recall, [seed, i, 7]))

    return Corpus([make(i) for i in range(exp.n_train)],
                  [make(TEST_SEED_OFFSET + i) for i in range(exp.n_test)])


def perturbation_sampler(episodes: Sequence[SynthEpisode], sigma_pos: float, sigma_dur: float,
                         seed: int):
    def sample(e: int, epoch: int, rng: np.random.Generator) -> SubtitleTrack:
        return perturb_track(episodes[e].gt, sigma_pos, sigma_dur, [seed, e, epoch, 11])
    return sample


def train_model(exp: ExperimentConfig, corpus: Corpus, seed: int, pretrain: bool | None = None,
                random_subtitle: bool = False, prior_sampler=None) -> tuple[SubtitleAligner, list]:
    pretrain = exp.pretrain if pretrain is None else pretrain
    train_cfg = replace(exp.train, seed=seed, random_subtitle=random_subtitle)
    model = init_params(exp.model, seed)
    loss_log = []
    if pretrain:
        spots = [s for ep in corpus.train for s in ep.spottings]
        res = pretrain_words(model, spots, corpus.train, train_cfg, exp.window)
        loss_log += res.loss_log
    res = finetune_subtitles(model, corpus.train, [e.gt for e in corpus.train],
                             [e.audio for e in corpus.train], train_cfg, exp.window,
                             prior_sampler=prior_sampler)
    loss_log += res.loss_log
    return model, loss_log


@dataclass
class Scores:
    sat: EvalReport
    prior: EvalReport
    pre_dtw_overlaps: int = 0
    post_dtw_overlaps: int = 0
    extra: dict = field(default_factory=dict)


def audio_priors(episodes: Sequence[SynthEpisode], shift_ms: int = 3200) -> list[SubtitleTrack]:
    return [shift_track(e.audio, shift_ms) for e in episodes]


def score_model(model: SubtitleAligner, exp: ExperimentConfig, episodes: Sequence[SynthEpisode],
                priors: Sequence[SubtitleTrack] | None = None, use_dtw: bool = True,
                input_priors: Sequence[SubtitleTrack] | None = None,
                window_offset_ms: float = 0.0) -> Scores:
    """Evaluate SAT and the prior itself inside the prior-centred windows.

    ``input_priors`` (default: ``priors``) are what the model sees; the
    evaluation windows always come from ``priors``.
    """
    if priors is None:
        priors = audio_priors(episodes)
    if input_priors is None:
        input_priors = priors
    preds, pre_overlaps, post_overlaps = [], 0, 0
    for ep, prior in zip(episodes, input_priors):
        out = align_episode(model, ep, prior, exp.window, exp.text, exp.tau, exp.tau_dtw,
                            use_dtw, window_offset_ms)
        preds.append(out.track)
        pre_overlaps += count_overlaps(out.pre_dtw)
        post_overlaps += count_overlaps(out.track)
    sat = evaluate_corpus(preds, episodes, priors, exp.window)
    base = evaluate_corpus(priors, episodes, priors, exp.window)
    return Scores(sat, base, pre_overlaps, post_overlaps)
