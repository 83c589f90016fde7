"""Toy per-modality encoders exposing the two fusion tap points.

Every encoder produces an ``EncoderOutput`` with a 256-dimensional feature
vector (rep256, the penultimate tap) and a 2-vector of class logits (rep2,
the individual head applied to rep256). Four kinds exist:

* ``vector``      - plain feed-forward over a numeric vector payload
* ``sequence``    - token-embedding lookup mean-pooled over positions
* ``frame_stack`` - per-frame linear map mean-pooled over frames
* ``precomputed`` - externally computed rep256; only the head trains

Widths are deliberately small (embedding 32, hidden 128) so a full
training run takes seconds.
"""

from __future__ import annotations

from dataclasses import dataclass
import json

import numpy as np

from .autograd import (
    ShapeError,
    Tensor,
    add_bias,
    matmul,
    no_grad,
    relu,
    softmax,
)

FEATURE_DIM = 256
HEAD_CLASSES = 2


@dataclass
class EncoderOutput:
    rep2: Tensor    # [b, 2] class logits
    rep256: Tensor  # [b, 256] penultimate features


def _init_linear(rng: np.random.Generator, fan_in: int, fan_out: int):
    w = Tensor(rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in),
               requires_grad=True)
    b = Tensor(np.zeros(fan_out), requires_grad=True)
    return w, b


class ModalityEncoder:
    """Base: parameter registry, head application, and scoring."""

    kind = "base"

    def __init__(self):
        self._params = []  # ordered (name, Tensor)

    def _register(self, name: str, tensor: Tensor) -> Tensor:
        self._params.append((name, tensor))
        return tensor

    def params(self):
        return list(self._params)

    def param_tensors(self):
        return [t for _, t in self._params]

    def param_count(self) -> int:
        return int(sum(t.size for t in self.param_tensors()))

    def trunk_tensors(self):
        """Parameters excluding the 2-class head."""
        return [t for name, t in self._params if not name.startswith("head_")]

    def _add_linear(self, rng, name: str, fan_in: int, fan_out: int):
        w, b = _init_linear(rng, fan_in, fan_out)
        return (self._register(f"{name}_w", w), self._register(f"{name}_b", b))

    def _init_head(self, rng):
        self.head_w, self.head_b = self._add_linear(rng, "head", FEATURE_DIM, HEAD_CLASSES)

    def _apply_head(self, rep256: Tensor) -> Tensor:
        return add_bias(matmul(rep256, self.head_w), self.head_b)

    def features(self, payload: np.ndarray, train: bool = False) -> Tensor:
        raise NotImplementedError

    def forward(self, payload: np.ndarray, train: bool = False) -> EncoderOutput:
        rep256 = self.features(payload, train)
        return EncoderOutput(rep2=self._apply_head(rep256), rep256=rep256)

    def scores(self, payload: np.ndarray) -> np.ndarray:
        """Probability of the positive class per instance (eval mode)."""
        with no_grad():
            out = self.forward(payload, train=False)
        return softmax(out.rep2.data)[:, 1]


def _check_batch(payload, kind: str, expected: str, ndim: int):
    x = np.asarray(payload)
    if x.ndim != ndim:
        raise ShapeError(
            f"{kind} encoder expects a batched payload of shape {expected}, "
            f"got array of shape {x.shape}"
        )
    return x


class VectorEncoder(ModalityEncoder):
    """Two-layer feed-forward over a fixed-length numeric vector."""

    kind = "vector"

    def __init__(self, input_dim: int, seed: int, hidden: int = 128):
        super().__init__()
        self.input_dim = int(input_dim)
        self.hidden = hidden
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 11]))
        self.w1, self.b1 = self._add_linear(rng, "ff1", input_dim, hidden)
        self.w2, self.b2 = self._add_linear(rng, "ff2", hidden, FEATURE_DIM)
        self._init_head(rng)

    def features(self, payload, train=False):
        x = _check_batch(payload, self.kind, f"[b, {self.input_dim}]", 2)
        if x.shape[1] != self.input_dim:
            raise ShapeError(
                f"vector encoder expects [b, {self.input_dim}], got {x.shape}"
            )
        h = relu(add_bias(matmul(Tensor(x), self.w1), self.b1))
        return add_bias(matmul(h, self.w2), self.b2)


class SequenceEncoder(ModalityEncoder):
    """Token-id sequence: embedding lookup, mean-pool, feed-forward."""

    kind = "sequence"

    def __init__(self, vocab_size: int = 64, seed: int = 0,
                 embed_dim: int = 32, hidden: int = 128):
        super().__init__()
        self.vocab_size = vocab_size
        self.embed_dim = embed_dim
        self.hidden = hidden
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 12]))
        self.embedding = self._register(
            "embedding",
            Tensor(rng.standard_normal((vocab_size, embed_dim)) / np.sqrt(embed_dim),
                   requires_grad=True),
        )
        self.w1, self.b1 = self._add_linear(rng, "ff1", embed_dim, hidden)
        self.w2, self.b2 = self._add_linear(rng, "ff2", hidden, FEATURE_DIM)
        self._init_head(rng)

    def features(self, payload, train=False):
        tokens = _check_batch(payload, self.kind, "[b, seq_len] of token ids", 2)
        if tokens.min(initial=0) < 0 or tokens.max(initial=0) >= self.vocab_size:
            raise ShapeError(
                f"sequence encoder: token ids must be in [0, {self.vocab_size})"
            )
        # Mean-pooled embedding lookup as a normalized count matrix product:
        # identical to averaging per-position embeddings.
        b, seq_len = tokens.shape
        counts = np.zeros((b, self.vocab_size))
        np.add.at(counts, (np.repeat(np.arange(b), seq_len), tokens.astype(np.intp).ravel()), 1.0)
        pooled = matmul(Tensor(counts / seq_len), self.embedding)
        h = relu(add_bias(matmul(pooled, self.w1), self.b1))
        return add_bias(matmul(h, self.w2), self.b2)


class FrameStackEncoder(ModalityEncoder):
    """Frame stack: per-frame linear map, mean-pool over frames, feed-forward.

    The per-frame map is linear, so it commutes with the frame mean; the
    payload is pooled first, which computes the identical function.
    """

    kind = "frame_stack"

    def __init__(self, frame_shape=(8, 8), seed: int = 0,
                 frame_out: int = 64, hidden: int = 128):
        super().__init__()
        self.frame_shape = tuple(frame_shape)
        self.frame_dim = int(np.prod(frame_shape))
        self.frame_out = frame_out
        self.hidden = hidden
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 13]))
        self.frame_w, self.frame_b = self._add_linear(rng, "frame", self.frame_dim, frame_out)
        self.w1, self.b1 = self._add_linear(rng, "ff1", frame_out, hidden)
        self.w2, self.b2 = self._add_linear(rng, "ff2", hidden, FEATURE_DIM)
        self._init_head(rng)

    def features(self, payload, train=False):
        x = np.asarray(payload, dtype=np.float64)
        if x.ndim == 4 and x.shape[2:] == self.frame_shape:
            x = x.reshape(x.shape[0], x.shape[1], self.frame_dim)
        if x.ndim != 3 or x.shape[2] != self.frame_dim:
            raise ShapeError(
                f"frame_stack encoder expects [b, frames, {self.frame_shape[0]}x"
                f"{self.frame_shape[1]}], got {np.asarray(payload).shape}"
            )
        pooled = x.mean(axis=1)
        mapped = add_bias(matmul(Tensor(pooled), self.frame_w), self.frame_b)
        h = relu(add_bias(matmul(mapped, self.w1), self.b1))
        return add_bias(matmul(h, self.w2), self.b2)


class PrecomputedEncoder(ModalityEncoder):
    """Frozen external trunk: the payload already is rep256."""

    kind = "precomputed"

    def __init__(self, seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 14]))
        self._init_head(rng)

    def features(self, payload, train=False):
        x = _check_batch(payload, self.kind, f"[b, {FEATURE_DIM}]", 2)
        if x.shape[1] != FEATURE_DIM:
            raise ShapeError(
                f"precomputed encoder expects [b, {FEATURE_DIM}], got {x.shape}"
            )
        return Tensor(x)


ENCODER_KINDS = {
    "vector": VectorEncoder,
    "sequence": SequenceEncoder,
    "frame_stack": FrameStackEncoder,
    "precomputed": PrecomputedEncoder,
}


def encode(encoder: ModalityEncoder, payload, train: bool = False) -> EncoderOutput:
    return encoder.forward(payload, train=train)


def predict_single(encoder: ModalityEncoder, payload) -> float:
    """Positive-class probability for a single instance payload."""
    x = np.asarray(payload)
    return float(encoder.scores(x[None, ...])[0])


# ---------------------------------------------------------------------------
# Precomputed-embedding files: one-line JSON {count, dim} header followed by
# count x dim little-endian float32 values.

def write_embedding_file(path, matrix) -> None:
    m = np.asarray(matrix, dtype="<f4")
    if m.ndim == 1:
        m = m[None, :]
    header = json.dumps({"count": int(m.shape[0]), "dim": int(m.shape[1])})
    with open(path, "wb") as f:
        f.write(header.encode("utf-8") + b"\n")
        f.write(np.ascontiguousarray(m).tobytes())


def read_embedding_file(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        data = np.frombuffer(f.read(), dtype="<f4")
    count, dim = int(header["count"]), int(header["dim"])
    if data.size != count * dim:
        raise ValueError(f"embedding file {path}: expected {count}x{dim} values")
    return data.reshape(count, dim)


def load_precomputed_embeddings(records, modality: str, base_dir=".") -> np.ndarray:
    """Read per-record embedding files into an [n, 256] matrix.

    Each record's ``embeddings[modality]`` names a file relative to
    ``base_dir``; vectors must be exactly 256 wide.
    """
    from pathlib import Path

    base = Path(base_dir)
    rows = []
    for r in records:
        if modality not in r.embeddings:
            raise KeyError(f"instance {r.id}: no precomputed {modality!r} embedding")
        vec = read_embedding_file(base / r.embeddings[modality])
        if vec.shape != (1, FEATURE_DIM):
            raise ValueError(
                f"instance {r.id}: embedding must be length {FEATURE_DIM}, "
                f"got shape {vec.shape}"
            )
        rows.append(vec[0])
    return np.asarray(rows, dtype=np.float64)
