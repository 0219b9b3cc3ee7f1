"""Command-line entry point: ``subalign <command> [options]``.

Exit codes: 0 success, 1 acceptance failure, 2 input error, 3 config or
checkpoint mismatch.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import torch

from .baselines import HeuristicConfig, shift_baseline, spotting_heuristic
from .config import ConfigError, RunConfig, load_run_config
from .corpus import CorpusError, Episode, load_corpus, load_episode, save_episode, write_loss_log
from .experiments import ExperimentConfig, build_corpus, score_model, train_model
from .features import FeatureFileError
from .metrics import EvalReport, MetricsError, evaluate
from .model import CheckpointError, SubtitleAligner, init_params, load_checkpoint, save_checkpoint
from .pipeline import TextConfig, align_episode, count_overlaps, evaluation_windows
from .subtitles import SubtitleError, SubtitleTrack, TrackKind, read_srt, shift_track, write_srt
from .synthgen import gen_episode, gen_spottings, with_spottings
from .training import TrainingError, finetune_subtitles, pretrain_words
from .windowing import Window, centered_window_start

log = logging.getLogger("subalign")

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_MISMATCH = 0, 1, 2, 3


class InputError(Exception):
    pass


def _require(path: str, what: str) -> Path:
    if not path:
        raise InputError(f"missing {what}")
    p = Path(path)
    if not p.exists():
        raise InputError(f"{what} not found: {p}")
    return p


def _text_cfg(cfg: RunConfig) -> TextConfig:
    return TextConfig(cfg.train.d_text, cfg.train.text_positional, cfg.train.sentence_mode)


def _write_report(report: EvalReport, out: Path, label: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report.to_csv())
    (out / "per_subtitle.csv").write_text(report.per_subtitle_csv())
    table = report.table(label)
    (out / "report.txt").write_text(table)
    print(table, end="")


def _load_model(cfg: RunConfig, checkpoint: str) -> SubtitleAligner:
    path = _require(checkpoint, "checkpoint")
    return load_checkpoint(path, cfg.model)


def _check_dims(model: SubtitleAligner, episodes) -> None:
    for ep in episodes:
        if ep.features.d_video != model.cfg.d_video_in:
            raise CheckpointError(
                f"episode {ep.episode_id} has {ep.features.d_video}-d features, "
                f"model expects {model.cfg.d_video_in}")


# -- commands --------------------------------------------------------------------


def cmd_synth(cfg: RunConfig, args) -> int:
    out = Path(cfg.out)
    n = args.episodes if args.episodes is not None else cfg.synth.episodes
    synth = replace(cfg.synth, seed=cfg.seed)
    for i in range(n):
        ep = gen_episode(synth, args.offset + i)
        ep = with_spottings(ep, gen_spottings(ep, args.recall, [cfg.seed, args.offset + i, 7]))
        save_episode(ep, out / ep.episode_id)
    print(f"wrote {n} episodes to {out}")
    return EXIT_OK


def _training_data(cfg: RunConfig) -> list[Episode]:
    episodes = load_corpus(_require(cfg.data, "training corpus (--data)"))
    missing = [e.episode_id for e in episodes if e.gt is None]
    if missing:
        raise InputError(f"episodes without gt.srt: {', '.join(missing)}")
    return episodes


def cmd_pretrain(cfg: RunConfig, args) -> int:
    episodes = _training_data(cfg)
    model = init_params(cfg.model, cfg.seed)
    _check_dims(model, episodes)
    spots = [s for e in episodes for s in e.spottings]
    res = pretrain_words(model, spots, episodes, cfg.train, cfg.window)
    out = Path(cfg.out)
    save_checkpoint(model, out, {"phase": "pretrain", "seed": cfg.seed})
    write_loss_log(out / "loss.csv", res.loss_log)
    print(f"pretrained checkpoint written to {out}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    episodes = _training_data(cfg)
    if cfg.checkpoint:
        model = _load_model(cfg, cfg.checkpoint)
    else:
        model = init_params(cfg.model, cfg.seed)
    _check_dims(model, episodes)
    res = finetune_subtitles(model, episodes, [e.gt for e in episodes],
                             [e.audio for e in episodes], cfg.train, cfg.window)
    out = Path(cfg.out)
    save_checkpoint(model, out, {"phase": "finetune", "seed": cfg.seed})
    write_loss_log(out / "loss.csv", res.loss_log)
    print(f"trained checkpoint written to {out}")
    return EXIT_OK


def _episode_arg(cfg: RunConfig) -> Episode:
    return load_episode(_require(cfg.episode, "episode directory (--episode)"))


def cmd_align(cfg: RunConfig, args) -> int:
    model = _load_model(cfg, cfg.checkpoint)
    episode = _episode_arg(cfg)
    _check_dims(model, [episode])
    prior = shift_track(episode.audio, cfg.train.prior_shift_ms).with_kind(TrackKind.PRIOR)
    result = align_episode(model, episode, prior, cfg.window, _text_cfg(cfg), cfg.tau,
                           cfg.tau_dtw, cfg.use_dtw)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    overlaps = count_overlaps(result.track)
    write_srt(result.track, out / "pred.srt", allow_overlaps=not cfg.use_dtw)
    print(f"wrote {out / 'pred.srt'} ({len(result.track)} cues, {overlaps} overlapping pairs)")
    if episode.gt is not None:
        windows = evaluation_windows(episode, prior, cfg.window)
        _write_report(evaluate(result.track, episode.gt, windows), out,
                      "SAT" if cfg.use_dtw else "SAT w/out DTW")
    return EXIT_OK


def cmd_baseline(cfg: RunConfig, args) -> int:
    episode = _episode_arg(cfg)
    prior = shift_track(episode.audio, cfg.train.prior_shift_ms)
    if args.method == "shift":
        pred = shift_baseline(episode.audio, args.delta_ms).with_kind(TrackKind.PREDICTED)
    else:
        pred = spotting_heuristic(episode.audio, episode.spottings, episode.active,
                                  HeuristicConfig(confidence_floor=cfg.train.confidence_floor),
                                  episode.duration_ms)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_srt(pred, out / "pred.srt")
    print(f"wrote {out / 'pred.srt'}")
    if episode.gt is not None:
        _write_report(evaluate(pred, episode.gt, evaluation_windows(episode, prior, cfg.window)),
                      out, args.method)
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args) -> int:
    pred = read_srt(_require(cfg.pred, "predicted SRT (--pred)"), TrackKind.PREDICTED)
    gt = read_srt(_require(cfg.gt, "ground-truth SRT (--gt)"), TrackKind.GROUND_TRUTH)
    if len(pred) != len(gt):
        raise InputError(f"count mismatch: {len(pred)} predicted vs {len(gt)} ground-truth cues")
    if cfg.audio:
        # windows centred on the shifted audio cues, as at inference time
        prior = shift_track(read_srt(_require(cfg.audio, "audio SRT"), TrackKind.AUDIO),
                            cfg.train.prior_shift_ms)
        if len(prior) != len(gt):
            raise InputError("audio and ground-truth tracks differ in length")
        fps = cfg.window.source_fps
        windows = [Window.timing_only(centered_window_start(p.midpoint, cfg.window, fps),
                                      cfg.window) for p in prior]
        report = evaluate(pred, gt, windows)
    else:
        episode_ms = max(max(s.end for s in pred), max(s.end for s in gt))
        report = evaluate(pred, gt, episode_ms=episode_ms)
    _write_report(report, Path(cfg.out), Path(cfg.pred).stem)
    return EXIT_OK


def cmd_smoke(cfg: RunConfig, args) -> int:
    """Synthesize, pretrain, finetune, align and score; compare to the prior."""
    exp = ExperimentConfig(model=cfg.model, train=cfg.train, window=cfg.window,
                           synth=cfg.synth, n_train=args.train_episodes,
                           n_test=args.test_episodes, tau=cfg.tau, tau_dtw=cfg.tau_dtw)
    corpus = build_corpus(exp, cfg.seed)
    model, loss_log = train_model(exp, corpus, cfg.seed)
    scores = score_model(model, exp, corpus.test, use_dtw=cfg.use_dtw)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_loss_log(out / "loss.csv", loss_log)
    (out / "report_sat.csv").write_text(scores.sat.to_csv())
    (out / "report_prior.csv").write_text(scores.prior.to_csv())
    print(scores.sat.table("SAT") + scores.prior.table("prior (audio +3.2 s)").split("\n", 1)[1],
          end="")
    d_acc = scores.sat.frame_acc - scores.prior.frame_acc
    d_f1 = scores.sat.f1[0.25] - scores.prior.f1[0.25]
    ok = d_acc >= cfg.margin_frame_acc and d_f1 >= cfg.margin_f1
    print(f"margin frame-acc {100 * d_acc:+.2f} (need {100 * cfg.margin_frame_acc:+.2f}), "
          f"F1@.25 {100 * d_f1:+.2f} (need {100 * cfg.margin_f1:+.2f}): "
          f"{'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "synth": cmd_synth,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "align": cmd_align,
    "baseline": cmd_baseline,
    "eval": cmd_eval,
    "smoke": cmd_smoke,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--profile", choices=("paper", "desk"))
    common.add_argument("--no-dtw", dest="use_dtw", action="store_false", default=None)
    common.add_argument("--tau", type=float)
    common.add_argument("--tau-dtw", dest="tau_dtw", type=float)
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="subalign", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic corpus")
    p.add_argument("--episodes", type=int)
    p.add_argument("--offset", type=int, default=0, help="first episode seed")
    p.add_argument("--recall", type=float, default=0.5, help="spotting recall")

    p = sub.add_parser("pretrain", parents=[common], help="word pretraining on spottings")
    p.add_argument("--data", help="corpus directory")

    p = sub.add_parser("train", parents=[common], help="subtitle finetuning")
    p.add_argument("--data", help="corpus directory")
    p.add_argument("--checkpoint", help="initial (e.g. pretrained) checkpoint")

    p = sub.add_parser("align", parents=[common], help="align one episode")
    p.add_argument("--checkpoint")
    p.add_argument("--episode", help="episode directory")

    p = sub.add_parser("baseline", parents=[common], help="run a reference aligner")
    p.add_argument("--episode", help="episode directory")
    p.add_argument("--method", choices=("shift", "heuristic"), default="shift")
    p.add_argument("--delta-ms", dest="delta_ms", type=int, default=3200)

    p = sub.add_parser("eval", parents=[common], help="score a predicted SRT")
    p.add_argument("--pred")
    p.add_argument("--gt")
    p.add_argument("--audio", help="audio SRT; windows are centred on its +3.2 s shift")

    p = sub.add_parser("smoke", parents=[common], help="end-to-end synthetic regression")
    p.add_argument("--train-episodes", dest="train_episodes", type=int, default=40)
    p.add_argument("--test-episodes", dest="test_episodes", type=int, default=8)
    p.add_argument("--margin-frame-acc", dest="margin_frame_acc", type=float)
    p.add_argument("--margin-f1", dest="margin_f1", type=float)
    return parser


_RUN_KEYS = ("seed", "use_dtw", "tau", "tau_dtw", "out", "data", "checkpoint", "episode",
             "pred", "gt", "audio", "margin_frame_acc", "margin_f1")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = os.environ.get("SUBALIGN_THREADS")
    try:
        if threads:
            torch.set_num_threads(int(threads))
        overrides = {k: getattr(args, k) for k in _RUN_KEYS if hasattr(args, k)}
        overrides["command"] = args.command
        cfg = load_run_config(args.config, args.profile, overrides)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, CheckpointError) as exc:
        print(f"subalign: configuration mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (InputError, FileNotFoundError, SubtitleError, FeatureFileError, CorpusError,
            MetricsError, TrainingError, ValueError) as exc:
        print(f"subalign: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
