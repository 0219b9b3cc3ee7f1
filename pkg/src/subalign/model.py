"""Subtitle Aligner Transformer (SAT).

Text tokens go through an encoder (no positional codes), video frames fused
with the binary prior go through a non-autoregressive decoder that
cross-attends to the encoded text, and a linear head with a sigmoid gives one
membership probability per frame.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .features import TokenSequence, read_container, sinusoid_table, write_container
from .windowing import Window

EPS = 1e-7
_MASK_VALUE = -1e9


class CheckpointError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 512
    num_layers: int = 2
    num_heads: int = 2
    d_video_in: int = 1024
    d_text_in: int = 768
    ffn_dim: int = 0  # 0 means 4 * d_model
    dropout_rate: float = 0.1
    fusion_half_dim: int = 0  # 0 means d_model // 2
    decoder_input_norm: bool = False

    def __post_init__(self):
        if self.ffn_dim == 0:
            object.__setattr__(self, "ffn_dim", 4 * self.d_model)
        if self.fusion_half_dim == 0:
            object.__setattr__(self, "fusion_half_dim", self.d_model // 2)
        for name in ("d_model", "num_layers", "num_heads", "d_video_in", "d_text_in",
                     "ffn_dim", "fusion_half_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.d_model % self.num_heads:
            raise ValueError("d_model must be divisible by num_heads")
        if self.d_model % 2:
            raise ValueError("d_model must be even for sinusoidal positions")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def positional_encoding(T: int, d_model: int) -> np.ndarray:
    """Sinusoidal table: PE[t, 2i] = sin(t / 10000^(2i/d)), PE[t, 2i+1] = cos(...)."""
    return sinusoid_table(T, d_model)


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, num_heads: int, dropout: float):
        super().__init__()
        self.num_heads = num_heads
        self.head_dim = d_model // num_heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)
        self.dropout = nn.Dropout(dropout)
        self.record = False
        self.last_weights: torch.Tensor | None = None

    def forward(self, query, key_value, key_pad=None):
        B, Tq, D = query.shape
        Tk = key_value.shape[1]
        h, hd = self.num_heads, self.head_dim
        q = self.q_proj(query).view(B, Tq, h, hd).transpose(1, 2)
        k = self.k_proj(key_value).view(B, Tk, h, hd).transpose(1, 2)
        v = self.v_proj(key_value).view(B, Tk, h, hd).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(hd)
        if key_pad is not None:
            scores = scores.masked_fill(key_pad[:, None, None, :], _MASK_VALUE)
        weights = torch.softmax(scores, dim=-1)
        if self.record:
            self.last_weights = weights.detach()
        out = (self.dropout(weights) @ v).transpose(1, 2).reshape(B, Tq, D)
        return self.out_proj(out)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, ffn_dim: int, dropout: float):
        super().__init__()
        self.linear1 = nn.Linear(d_model, ffn_dim)
        self.linear2 = nn.Linear(ffn_dim, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x):
        return self.linear2(self.dropout(F.relu(self.linear1(x))))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.num_heads, cfg.dropout_rate)
        self.ffn = FeedForward(cfg.d_model, cfg.ffn_dim, cfg.dropout_rate)
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.dropout = nn.Dropout(cfg.dropout_rate)

    def forward(self, x, pad):
        x = self.norm1(x + self.dropout(self.self_attn(x, x, pad)))
        return self.norm2(x + self.dropout(self.ffn(x)))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.num_heads, cfg.dropout_rate)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.num_heads, cfg.dropout_rate)
        self.ffn = FeedForward(cfg.d_model, cfg.ffn_dim, cfg.dropout_rate)
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.norm3 = nn.LayerNorm(cfg.d_model)
        self.dropout = nn.Dropout(cfg.dropout_rate)

    def forward(self, x, frame_pad, memory, memory_pad):
        x = self.norm1(x + self.dropout(self.self_attn(x, x, frame_pad)))
        x = self.norm2(x + self.dropout(self.cross_attn(x, memory, memory_pad)))
        return self.norm3(x + self.dropout(self.ffn(x)))


class SubtitleAligner(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.text_proj = nn.Linear(cfg.d_text_in, cfg.d_model)
        self.video_proj = nn.Linear(cfg.d_video_in, cfg.fusion_half_dim)
        self.prior_proj = nn.Linear(1, cfg.fusion_half_dim)
        self.fusion_proj = nn.Linear(2 * cfg.fusion_half_dim, cfg.d_model)
        self.encoder = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.num_layers))
        self.decoder = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.num_layers))
        self.input_norm = nn.LayerNorm(cfg.d_model) if cfg.decoder_input_norm else None
        self.head = nn.Linear(cfg.d_model, 1)
        self._pe_cache: dict[int, torch.Tensor] = {}

    def _pe(self, T: int, like: torch.Tensor) -> torch.Tensor:
        pe = self._pe_cache.get(T)
        if pe is None:
            pe = torch.from_numpy(positional_encoding(T, self.cfg.d_model))
            self._pe_cache[T] = pe
        return pe.to(dtype=like.dtype)

    def encode(self, text, text_pad=None):
        """text: (B, L, d_text_in) -> memory (B, L, d_model)."""
        x = self.text_proj(text)
        for layer in self.encoder:
            x = layer(x, text_pad)
        return x

    def decode_logits(self, video, prior, memory, memory_pad=None, frame_pad=None):
        """video: (B, T, d_video_in), prior: (B, T) -> logits (B, T)."""
        fused = torch.cat([self.video_proj(video), self.prior_proj(prior.unsqueeze(-1))], -1)
        x = self.fusion_proj(fused) + self._pe(video.shape[1], video)
        if self.input_norm is not None:
            x = self.input_norm(x)
        for layer in self.decoder:
            x = layer(x, frame_pad, memory, memory_pad)
        return self.head(x).squeeze(-1)

    def forward_logits(self, text, text_pad, video, prior, frame_pad=None):
        memory = self.encode(text, text_pad)
        return self.decode_logits(video, prior, memory, text_pad, frame_pad)

    def forward(self, text, text_pad, video, prior, frame_pad=None):
        return torch.sigmoid(self.forward_logits(text, text_pad, video, prior, frame_pad))

    def set_recording(self, flag: bool) -> None:
        for m in self.modules():
            if isinstance(m, MultiHeadAttention):
                m.record = flag


def init_params(cfg: ModelConfig, seed: int, zero_head: bool = False) -> SubtitleAligner:
    """Build a model with uniform(+-sqrt(1/fan_in)) weights and zero biases.

    ``zero_head`` zeroes the output head so a fresh model predicts exactly 0.5.
    """
    model = SubtitleAligner(cfg)
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, nn.Linear):
                bound = math.sqrt(1.0 / module.in_features)
                w = torch.rand(module.weight.shape, generator=gen, dtype=torch.float64)
                module.weight.copy_((2 * w - 1) * bound)
                module.bias.zero_()
            elif isinstance(module, nn.LayerNorm):
                module.weight.fill_(1.0)
                module.bias.zero_()
        if zero_head:
            model.head.weight.zero_()
    return model


# -- single-window convenience wrappers ------------------------------------------


def _as_tensor(x, dtype) -> torch.Tensor:
    return torch.as_tensor(np.array(x), dtype=dtype)


def _dtype(model: nn.Module) -> torch.dtype:
    return next(model.parameters()).dtype


def encode_text(tokens: TokenSequence, model: SubtitleAligner):
    """Encode one token sequence; returns (memory (L, d_model), key_mask (L,))."""
    emb = np.asarray(tokens.embeddings)
    if not np.isfinite(emb).all():
        raise NonFiniteError("non-finite token embeddings")
    text = _as_tensor(emb, _dtype(model))[None]
    key_mask = torch.zeros(1, text.shape[1], dtype=torch.bool)
    with torch.no_grad():
        memory = model.encode(text, key_mask)
    return memory[0], key_mask[0]


def forward(window: Window, prior, memory, key_mask, model: SubtitleAligner) -> np.ndarray:
    """Per-frame probabilities for one window; dropout must be off (eval mode)."""
    prior = np.asarray(prior, dtype=np.float64)
    if prior.shape != (window.T,):
        raise ValueError(f"prior length {prior.shape} does not match window T={window.T}")
    dt = _dtype(model)
    with torch.no_grad():
        logits = model.decode_logits(
            _as_tensor(window.features, dt)[None],
            _as_tensor(prior, dt)[None],
            memory[None],
            key_mask[None],
            torch.as_tensor(window.pad_mask)[None],
        )
    probs = torch.sigmoid(logits)[0].double().numpy()
    if not np.isfinite(probs).all():
        raise NonFiniteError("non-finite activations in forward pass")
    return probs


def bce_loss(pred: torch.Tensor, target: torch.Tensor, pad_mask=None, eps: float = EPS):
    """Binary cross entropy averaged over unpadded frames.

    Works on (T,) or (B, T) inputs; the mean is over all valid frames in the batch.
    """
    pred = torch.as_tensor(pred)
    target = torch.as_tensor(target, dtype=pred.dtype)
    p = pred.clamp(eps, 1 - eps)
    ll = target * torch.log(p) + (1 - target) * torch.log(1 - p)
    if pad_mask is None:
        return -ll.mean()
    valid = ~torch.as_tensor(pad_mask, dtype=torch.bool)
    n = valid.sum()
    if n == 0:
        return (ll * 0).sum()
    return -(ll * valid).sum() / n


def gradients(model: nn.Module) -> dict[str, torch.Tensor]:
    """Gradient per named parameter after ``loss.backward()``; unused ones are zero."""
    grads = {}
    for name, p in model.named_parameters():
        g = p.grad if p.grad is not None else torch.zeros_like(p)
        if not torch.isfinite(g).all():
            raise NonFiniteError(f"non-finite gradient for {name}")
        grads[name] = g
    return grads


# -- checkpoints ---------------------------------------------------------------

MANIFEST = "manifest.json"


def save_checkpoint(model: SubtitleAligner, directory, extra: dict | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors = []
    for i, (name, t) in enumerate(model.state_dict().items()):
        arr = t.detach().cpu().float().numpy()
        fname = f"t{i:03d}.bin"
        write_container(directory / fname, arr.reshape(arr.shape[0] if arr.ndim else 1, -1))
        tensors.append({"name": name, "shape": list(arr.shape), "file": fname})
    manifest = {"config": asdict(model.cfg), "tensors": tensors, "extra": extra or {}}
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=2))


def read_manifest(directory) -> dict:
    path = Path(directory) / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"no checkpoint manifest at {path}")
    return json.loads(path.read_text())


def load_checkpoint(directory, expected: ModelConfig | None = None) -> SubtitleAligner:
    directory = Path(directory)
    manifest = read_manifest(directory)
    cfg = ModelConfig.from_dict(manifest["config"])
    if expected is not None and cfg != expected:
        raise CheckpointError(f"checkpoint config {cfg} does not match expected {expected}")
    model = SubtitleAligner(cfg)
    state = model.state_dict()
    names = {t["name"] for t in manifest["tensors"]}
    if names != set(state):
        raise CheckpointError("checkpoint tensor names do not match the model")
    loaded = {}
    for entry in manifest["tensors"]:
        _, arr = read_container(directory / entry["file"])
        shape = tuple(entry["shape"])
        if tuple(state[entry["name"]].shape) != shape:
            raise CheckpointError(f"shape mismatch for {entry['name']}")
        loaded[entry["name"]] = torch.from_numpy(arr.reshape(shape).copy())
    model.load_state_dict(loaded)
    model.eval()
    return model


# -- batching ------------------------------------------------------------------


@dataclass
class Batch:
    text: torch.Tensor  # (B, L, d_text)
    text_pad: torch.Tensor  # (B, L) bool, true = padding
    video: torch.Tensor  # (B, T, d_video)
    prior: torch.Tensor  # (B, T)
    frame_pad: torch.Tensor  # (B, T) bool
    target: torch.Tensor | None = None  # (B, T)

    def to(self, dtype) -> "Batch":
        return Batch(self.text.to(dtype), self.text_pad, self.video.to(dtype),
                     self.prior.to(dtype), self.frame_pad,
                     None if self.target is None else self.target.to(dtype))


def collate(texts: Sequence[np.ndarray], videos: Sequence[np.ndarray],
            priors: Sequence[np.ndarray], frame_pads: Sequence[np.ndarray],
            targets: Sequence[np.ndarray] | None = None) -> Batch:
    B = len(texts)
    L = max(t.shape[0] for t in texts)
    d_text = texts[0].shape[1]
    text = np.zeros((B, L, d_text), dtype=np.float32)
    text_pad = np.ones((B, L), dtype=bool)
    for i, t in enumerate(texts):
        text[i, : t.shape[0]] = t
        text_pad[i, : t.shape[0]] = False
    return Batch(
        torch.from_numpy(text),
        torch.from_numpy(text_pad),
        torch.from_numpy(np.stack(videos).astype(np.float32)),
        torch.from_numpy(np.stack(priors).astype(np.float32)),
        torch.from_numpy(np.stack(frame_pads).astype(bool)),
        None if targets is None else torch.from_numpy(np.stack(targets).astype(np.float32)),
    )


def batch_loss(model: SubtitleAligner, batch: Batch) -> torch.Tensor:
    probs = model(batch.text, batch.text_pad, batch.video, batch.prior, batch.frame_pad)
    return bce_loss(probs, batch.target, batch.frame_pad)
