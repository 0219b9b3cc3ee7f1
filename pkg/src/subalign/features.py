"""Video feature and text embedding inputs.

Features come either from files (precomputed backbone outputs) or from the
deterministic hash backend used at desk scale.

Container layout (little-endian)::

    magic   8 bytes  b"SUBALNF1"
    version u32      1
    rows    u64
    cols    u32
    fps     u32      frames per second x 1000 (0 for non-temporal tensors)
    payload rows * cols float32, row-major
"""

from __future__ import annotations

import hashlib
import string
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"SUBALNF1"
VERSION = 1
_HEADER = struct.Struct("<8sIQII")
HEADER_SIZE = _HEADER.size

_PUNCT = string.punctuation + "\u2018\u2019\u201c\u201d\u2026\u2013\u2014"


class FeatureFileError(ValueError):
    pass


class TokenizeError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureFileHeader:
    magic: bytes
    version: int
    rows: int
    cols: int
    fps_milli: int

    def pack(self) -> bytes:
        return _HEADER.pack(self.magic, self.version, self.rows, self.cols, self.fps_milli)

    @classmethod
    def unpack(cls, raw: bytes) -> "FeatureFileHeader":
        if len(raw) < HEADER_SIZE:
            raise FeatureFileError("truncated header")
        return cls(*_HEADER.unpack_from(raw))


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    frames: np.ndarray
    fps: float = 25.0

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float32)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise FeatureFileError("feature sequence needs at least one frame")
        if not np.isfinite(frames).all():
            raise FeatureFileError("non-finite feature values")
        if self.fps <= 0:
            raise FeatureFileError("fps must be positive")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def d_video(self) -> int:
        return self.frames.shape[1]

    @property
    def duration_ms(self) -> int:
        return int(round(self.num_frames * 1000 / self.fps))


@dataclass(frozen=True, eq=False)
class TokenSequence:
    tokens: tuple[str, ...]
    embeddings: np.ndarray

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=np.float32)
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if emb.ndim != 2 or emb.shape[0] < 1:
            raise ValueError("token sequence needs at least one row")
        if emb.shape[0] != len(self.tokens):
            raise ValueError(
                f"token/row count mismatch: {len(self.tokens)} tokens, {emb.shape[0]} rows"
            )
        if not np.isfinite(emb).all():
            raise ValueError("non-finite embedding values")
        emb.setflags(write=False)
        object.__setattr__(self, "embeddings", emb)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def d_text(self) -> int:
        return self.embeddings.shape[1]


# -- binary container ---------------------------------------------------------


def write_container(path, matrix: np.ndarray, fps: float = 0.0) -> None:
    matrix = np.asarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise FeatureFileError("container payload must be 2-D")
    header = FeatureFileHeader(MAGIC, VERSION, matrix.shape[0], matrix.shape[1],
                               int(round(fps * 1000)))
    with open(path, "wb") as fh:
        fh.write(header.pack())
        fh.write(np.ascontiguousarray(matrix).tobytes())


def read_container(path) -> tuple[FeatureFileHeader, np.ndarray]:
    raw = Path(path).read_bytes()
    header = FeatureFileHeader.unpack(raw)
    if header.magic != MAGIC:
        raise FeatureFileError(f"bad magic {header.magic!r} in {path}")
    if header.version != VERSION:
        raise FeatureFileError(f"unsupported container version {header.version}")
    expected = header.rows * header.cols * 4
    payload = raw[HEADER_SIZE:]
    if len(payload) < expected:
        raise FeatureFileError(
            f"truncated payload in {path}: expected {expected} bytes, got {len(payload)}"
        )
    if len(payload) > expected:
        raise FeatureFileError(f"trailing bytes after payload in {path}")
    matrix = np.frombuffer(payload, dtype="<f4").reshape(header.rows, header.cols)
    return header, matrix.astype(np.float32)


def save_features(path, features: FeatureSequence) -> None:
    write_container(path, features.frames, features.fps)


def load_features(path) -> FeatureSequence:
    header, matrix = read_container(path)
    if header.rows == 0:
        raise FeatureFileError("empty feature file")
    if header.fps_milli == 0:
        raise FeatureFileError("feature file has no frame rate")
    if not np.isfinite(matrix).all():
        raise FeatureFileError(f"non-finite values in {path}")
    return FeatureSequence(matrix, header.fps_milli / 1000)


def _sidecar(path) -> Path:
    return Path(str(path) + ".tokens")


def save_token_embeddings(path, seq: TokenSequence, tokens_path=None) -> None:
    write_container(path, seq.embeddings)
    tokens_path = tokens_path or _sidecar(path)
    Path(tokens_path).write_text("".join(t + "\n" for t in seq.tokens), encoding="utf-8")


def load_token_embeddings(path, tokens_path=None) -> TokenSequence:
    header, matrix = read_container(path)
    tokens_path = tokens_path or _sidecar(path)
    tokens = Path(tokens_path).read_text(encoding="utf-8").splitlines()
    if len(tokens) != header.rows:
        raise FeatureFileError(
            f"token count mismatch: {len(tokens)} tokens but {header.rows} embedding rows"
        )
    return TokenSequence(tuple(tokens), matrix)


# -- hash text backend ---------------------------------------------------------


def tokenize(text: str) -> list[str]:
    """Lowercase whitespace split with edge punctuation stripped per token."""
    tokens = [t.strip(_PUNCT) for t in text.lower().split()]
    tokens = [t for t in tokens if t]
    if not tokens:
        raise TokenizeError(f"no tokens in {text!r}")
    return tokens


def token_hash(token: str) -> int:
    return int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little")


def sinusoid_table(length: int, dim: int) -> np.ndarray:
    """Sinusoidal position codes, sin on even and cos on odd channels."""
    if dim % 2:
        raise ValueError("sinusoid dimension must be even")
    pos = np.arange(length, dtype=np.float64)[:, None]
    div = np.power(10000.0, np.arange(0, dim, 2, dtype=np.float64) / dim)
    table = np.empty((length, dim))
    table[:, 0::2] = np.sin(pos / div)
    table[:, 1::2] = np.cos(pos / div)
    return table


def hash_embed(tokens, d_text: int = 64, add_positional: bool = False) -> TokenSequence:
    if d_text < 8:
        raise ValueError("d_text must be at least 8")
    tokens = list(tokens)
    rows = np.empty((len(tokens), d_text))
    for i, tok in enumerate(tokens):
        gen = np.random.Generator(np.random.Philox(key=token_hash(tok)))
        v = gen.standard_normal(d_text)
        rows[i] = v / np.linalg.norm(v)
    if add_positional:
        # position codes scaled to unit norm so they do not swamp the content
        pe = sinusoid_table(len(tokens), d_text) / np.sqrt(d_text / 2)
        rows = rows + pe
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return TokenSequence(tuple(tokens), rows)


def sentence_embedding(seq: TokenSequence) -> TokenSequence:
    """Mean-pool the token rows into a single-row sequence."""
    pooled = seq.embeddings.mean(axis=0, keepdims=True)
    return TokenSequence((" ".join(seq.tokens),), pooled)


def embed_text(text: str, d_text: int = 64, add_positional: bool = False,
               sentence_mode: bool = False) -> TokenSequence:
    seq = hash_embed(tokenize(text), d_text, add_positional)
    return sentence_embedding(seq) if sentence_mode else seq
