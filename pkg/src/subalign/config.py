"""Run configuration: profiles and the key-value config file.

The config file is INI-style::

    [run]
    profile = desk
    seed = 3
    tau = 0.5

    [model]
    d_model = 64

    [train]
    lr_finetune = 5e-4

Sections ``model``, ``train``, ``window`` and ``synth`` override the fields of
the matching dataclass; ``run`` holds the remaining top-level settings.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .model import ModelConfig
from .synthgen import SynthConfig
from .training import TrainConfig
from .windowing import WindowConfig

PROFILES = ("paper", "desk")


class ConfigError(ValueError):
    pass


def profile_defaults(profile: str):
    """(ModelConfig, TrainConfig, WindowConfig, SynthConfig) for a profile."""
    if profile == "paper":
        model = ModelConfig(d_model=512, num_layers=2, num_heads=2, d_video_in=1024,
                            d_text_in=768)
        train = TrainConfig(batch_size=64, lr_pretrain=1e-5, lr_finetune=5e-6,
                            pretrain_epochs=5, finetune_epochs=80, d_text=768)
        synth = SynthConfig(d_video=1024)
        window = WindowConfig()
    elif profile == "desk":
        model = ModelConfig(d_model=64, num_layers=2, num_heads=2, d_video_in=32,
                            d_text_in=64, dropout_rate=0.1)
        train = TrainConfig(batch_size=16, lr_pretrain=1e-3, lr_finetune=1e-3,
                            pretrain_epochs=3, finetune_epochs=24, d_text=64)
        synth = SynthConfig(d_video=32)
        # a shorter window keeps the synthetic subtitles a larger share of T
        window = WindowConfig(window_seconds=16.0)
    else:
        raise ConfigError(f"unknown profile {profile!r}; expected one of {PROFILES}")
    return model, train, window, synth


@dataclass
class RunConfig:
    command: str = ""
    profile: str = "desk"
    seed: int = 0
    tau: float = 0.5
    tau_dtw: float = 0.4
    use_dtw: bool = True
    data: str = ""
    episode: str = ""
    features: str = ""
    audio: str = ""
    gt: str = ""
    pred: str = ""
    spottings: str = ""
    active: str = ""
    checkpoint: str = ""
    out: str = "out"
    margin_frame_acc: float = 0.10
    margin_f1: float = 0.15
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    window: WindowConfig = field(default_factory=WindowConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def validate(self) -> None:
        if not 0 < self.tau < 1 or not 0 < self.tau_dtw < 1:
            raise ConfigError("tau and tau_dtw must lie in (0, 1)")
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown profile {self.profile!r}")


def _coerce(value: str, target_type, current):
    kind = type(current)
    if kind is bool:
        v = value.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    if kind is tuple:
        parts = [p for p in value.replace(",", " ").split() if p]
        return tuple(type(current[0])(p) for p in parts)
    if kind in (int, float, str):
        return kind(value)
    raise ConfigError(f"unsupported config value type {kind}")


def _override(obj, items: dict[str, str], section: str):
    names = {f.name for f in fields(obj)}
    updates = {}
    for key, raw in items.items():
        if key not in names:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        updates[key] = _coerce(raw, None, getattr(obj, key))
    if isinstance(obj, ModelConfig) and "d_model" in updates:
        # sizes derived from d_model are recomputed unless given explicitly
        for derived in ("ffn_dim", "fusion_half_dim"):
            updates.setdefault(derived, 0)
    try:
        return replace(obj, **updates)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def load_run_config(path: str | None = None, profile: str | None = None,
                    overrides: dict | None = None) -> RunConfig:
    parser = configparser.ConfigParser()
    if path:
        if not Path(path).exists():
            raise FileNotFoundError(f"config file not found: {path}")
        parser.read(path)
    run_items = dict(parser["run"]) if parser.has_section("run") else {}
    prof = profile or run_items.get("profile", "desk")
    model, train, window, synth = profile_defaults(prof)
    cfg = RunConfig(profile=prof, model=model, train=train, window=window, synth=synth)
    sections = {"model": "model", "train": "train", "window": "window", "synth": "synth"}
    for section, attr in sections.items():
        if parser.has_section(section):
            setattr(cfg, attr, _override(getattr(cfg, attr), dict(parser[section]), section))
    run_items.pop("profile", None)
    top = {f.name for f in fields(RunConfig) if f.name not in sections}
    for key, raw in run_items.items():
        if key not in top:
            raise ConfigError(f"unknown key {key!r} in [run]")
        setattr(cfg, key, _coerce(raw, None, getattr(cfg, key)))
    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, key, value)
    if cfg.seed != cfg.train.seed:
        cfg.train = dataclasses.replace(cfg.train, seed=cfg.seed)
    cfg.validate()
    return cfg
