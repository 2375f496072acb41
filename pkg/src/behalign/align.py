"""Trainable alignment projector: an MLP with ReLU hiddens, inverted dropout,
and an L2-normalized output, trained with Adam against caption encodings.

All training math is hand-rolled numpy (reverse-mode gradients included) so
that every step is deterministic, seedable, and checkable against finite
differences at double precision.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .embeddings import NORM_EPS, EmbeddingTable
from .errors import (
    BadMagicError,
    DimMismatchError,
    EmptyDatasetError,
    TruncatedFileError,
    VersionMismatchError,
    ZeroVectorError,
)

CHECKPOINT_MAGIC = b"BHPJ"
CHECKPOINT_VERSION = 1

LOSS_KINDS = ("cosine", "mse", "preference")


@dataclass
class MlpProjector:
    """Stack of affine layers; hiddens use max(0, .), the final output is
    L2-normalized and carries no activation."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    dropout_rate: float = 0.5
    seed: int | None = None

    def __post_init__(self) -> None:
        if not self.weights or len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must be non-empty and parallel")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {i}: bad shapes {w.shape} / {b.shape}")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i}: input dim {w.shape[1]} breaks the chain")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")

    @property
    def input_dim(self) -> int:
        return int(self.weights[0].shape[1])

    @property
    def output_dim(self) -> int:
        return int(self.weights[-1].shape[0])

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.input_dim,) + tuple(int(w.shape[0]) for w in self.weights)

    @property
    def parameters(self) -> list[np.ndarray]:
        params: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            params.extend((w, b))
        return params

    @classmethod
    def create(
        cls,
        input_dim: int,
        output_dim: int,
        hidden: Sequence[int] = (256, 256, 256),
        *,
        dropout_rate: float = 0.5,
        seed: int | None = 0,
        rng: np.random.Generator | None = None,
        dtype=np.float32,
    ) -> "MlpProjector":
        """Fan-in-scaled symmetric uniform init, seeded."""
        if rng is None:
            rng = np.random.default_rng(seed)
        sizes = [input_dim, *hidden, output_dim]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)).astype(dtype))
            biases.append(rng.uniform(-bound, bound, size=fan_out).astype(dtype))
        return cls(weights=weights, biases=biases, dropout_rate=dropout_rate, seed=seed)


@dataclass
class ForwardCache:
    """Everything backward() needs: per-layer inputs, masks, pre-norm output."""

    layer_inputs: list[np.ndarray]
    relu_masks: list[np.ndarray]
    dropout_masks: list[np.ndarray | None]
    prenorm: np.ndarray
    norms: np.ndarray
    single: bool


def forward(
    p: MlpProjector,
    x: np.ndarray,
    *,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Project inputs; returns unit rows (zero rows stay zero) plus the cache.

    Train mode applies inverted dropout after each hidden rectifier and needs
    an rng when the projector's dropout rate is non-zero.
    """
    x = np.asarray(x)
    single = x.ndim == 1
    a = np.atleast_2d(x).astype(p.weights[0].dtype, copy=False)
    if a.shape[1] != p.input_dim:
        raise DimMismatchError(f"input dim {a.shape[1]} != projector input {p.input_dim}")
    use_dropout = train and p.dropout_rate > 0.0
    if use_dropout and rng is None:
        raise ValueError("train-mode forward with dropout needs an rng")
    layer_inputs: list[np.ndarray] = []
    relu_masks: list[np.ndarray] = []
    dropout_masks: list[np.ndarray | None] = []
    for w, b in zip(p.weights[:-1], p.biases[:-1]):
        layer_inputs.append(a)
        h = a @ w.T + b
        mask = h > 0
        relu_masks.append(mask)
        a = np.where(mask, h, 0)
        if use_dropout:
            keep = 1.0 - p.dropout_rate
            dmask = (rng.random(a.shape) < keep).astype(a.dtype) / keep
            dropout_masks.append(dmask)
            a = a * dmask
        else:
            dropout_masks.append(None)
    layer_inputs.append(a)
    y = a @ p.weights[-1].T + p.biases[-1]
    norms = np.linalg.norm(y, axis=1, keepdims=True)
    z = np.where(norms > NORM_EPS, y / np.where(norms > NORM_EPS, norms, 1.0), 0.0)
    cache = ForwardCache(layer_inputs, relu_masks, dropout_masks, y, norms, single)
    return (z[0] if single else z), cache


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def parameters(self) -> list[np.ndarray]:
        params: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            params.extend((w, b))
        return params


def backward(p: MlpProjector, cache: ForwardCache, loss_grad: np.ndarray) -> Gradients:
    """Exact reverse-mode gradients of the loss w.r.t. every weight and bias,
    chained through the output normalization and any dropout masks.

    ``loss_grad`` is dL/dz summed over the batch rows it carries.
    """
    g = np.atleast_2d(np.asarray(loss_grad, dtype=cache.prenorm.dtype))
    if g.shape != cache.prenorm.shape:
        raise DimMismatchError(f"loss_grad shape {g.shape} != output shape {cache.prenorm.shape}")
    # Through z = y / ||y||: J = (I - z z^T) / ||y||; zero rows stay zero.
    norms = cache.norms
    nonzero = norms > NORM_EPS
    zhat = np.where(nonzero, cache.prenorm / np.where(nonzero, norms, 1.0), 0.0)
    gy = (g - (g * zhat).sum(axis=1, keepdims=True) * zhat) / np.where(nonzero, norms, 1.0)
    gy = np.where(nonzero, gy, 0.0)

    w_grads = [np.zeros_like(w) for w in p.weights]
    b_grads = [np.zeros_like(b) for b in p.biases]
    w_grads[-1] = gy.T @ cache.layer_inputs[-1]
    b_grads[-1] = gy.sum(axis=0)
    g = gy @ p.weights[-1]
    for i in range(len(p.weights) - 2, -1, -1):
        if cache.dropout_masks[i] is not None:
            g = g * cache.dropout_masks[i]
        g = g * cache.relu_masks[i]
        w_grads[i] = g.T @ cache.layer_inputs[i]
        b_grads[i] = g.sum(axis=0)
        g = g @ p.weights[i]
    return Gradients(weights=w_grads, biases=b_grads)


def _norms_or_raise(x: np.ndarray, name: str) -> np.ndarray:
    n = np.linalg.norm(x, axis=-1)
    if np.any(n <= NORM_EPS):
        raise ZeroVectorError(f"{name} contains a (near-)zero vector")
    return n


def cosine_loss(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cos(a, b), in [0, 2]. Raises on zero vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatchError(f"shape mismatch {a.shape} vs {b.shape}")
    na = _norms_or_raise(a, "a")
    nb = _norms_or_raise(b, "b")
    return float(1.0 - (a * b).sum() / (na * nb))


def mse_loss(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared difference over coordinates."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatchError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def preference_loss(z_i: np.ndarray, z_j: np.ndarray, caption_i: np.ndarray, margin: float) -> float:
    """Hinge on the cosine-loss gap between the matched and a contrast projection."""
    return float(
        max(0.0, cosine_loss(z_i, caption_i) - cosine_loss(z_j, caption_i) + margin)
    )


def _cosine_batch(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise cosine losses and dL/da for unnormalized inputs."""
    a64 = a.astype(np.float64, copy=False)
    b64 = b.astype(np.float64, copy=False)
    na = _norms_or_raise(a64, "projection")[:, None]
    nb = _norms_or_raise(b64, "caption")[:, None]
    cos = (a64 * b64).sum(axis=1, keepdims=True) / (na * nb)
    losses = 1.0 - cos[:, 0]
    grad = -(b64 / (na * nb) - cos * a64 / (na * na))
    return losses, grad


class Adam:
    """Standard bias-corrected Adam over a flat list of parameter arrays."""

    def __init__(
        self,
        params: Sequence[np.ndarray],
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        if len(params) != len(self.m) or len(grads) != len(params):
            raise DimMismatchError("parameter/gradient count mismatch")
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= self.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 128
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    dropout_rate: float = 0.5
    loss: str = "cosine"
    margin: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")


@dataclass
class TrainReport:
    epoch_losses: list[float]
    projector: MlpProjector
    seed: int
    wall_time_s: float = 0.0


def train_alignment(
    video_rows: np.ndarray,
    caption_rows: np.ndarray,
    config: TrainConfig = TrainConfig(),
    *,
    projector: MlpProjector | None = None,
    hidden: Sequence[int] = (256, 256, 256),
) -> TrainReport:
    """Mini-batch training of the projector against caption encodings.

    Shuffles per epoch with a seeded rng, keeps the final partial batch,
    averages the loss over each batch, and applies one Adam step per batch.
    Deterministic given (data, config, seed).
    """
    video_rows = np.ascontiguousarray(video_rows, dtype=np.float32)
    caption_rows = np.ascontiguousarray(caption_rows, dtype=np.float32)
    n = video_rows.shape[0]
    if n == 0:
        raise EmptyDatasetError("no training pairs")
    if caption_rows.shape[0] != n:
        raise DimMismatchError(f"{n} video rows vs {caption_rows.shape[0]} caption rows")
    init_ss, shuffle_ss, dropout_ss, pref_ss = np.random.SeedSequence(config.seed).spawn(4)
    if projector is None:
        projector = MlpProjector.create(
            video_rows.shape[1],
            caption_rows.shape[1],
            hidden,
            dropout_rate=config.dropout_rate,
            seed=config.seed,
            rng=np.random.default_rng(init_ss),
        )
    if projector.input_dim != video_rows.shape[1]:
        raise DimMismatchError(
            f"projector input {projector.input_dim} != video dim {video_rows.shape[1]}"
        )
    if projector.output_dim != caption_rows.shape[1]:
        raise DimMismatchError(
            f"projector output {projector.output_dim} != caption dim {caption_rows.shape[1]}"
        )
    shuffle_rng = np.random.default_rng(shuffle_ss)
    dropout_rng = np.random.default_rng(dropout_ss)
    pref_rng = np.random.default_rng(pref_ss)
    optimizer = Adam(
        projector.parameters,
        learning_rate=config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.adam_eps,
    )
    started = time.perf_counter()
    epoch_losses: list[float] = []
    for _ in range(config.epochs):
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        for lo in range(0, n, config.batch_size):
            batch = order[lo : lo + config.batch_size]
            xb = video_rows[batch]
            cb = caption_rows[batch]
            z, cache = forward(projector, xb, train=True, rng=dropout_rng)
            bsize = len(batch)
            if config.loss == "cosine":
                losses, dz = _cosine_batch(z, cb)
            elif config.loss == "mse":
                diff = z.astype(np.float64) - cb.astype(np.float64)
                losses = np.mean(diff**2, axis=1)
                dz = 2.0 * diff / z.shape[1]
            else:  # preference
                partners = pref_rng.integers(0, max(bsize - 1, 1), size=bsize)
                if bsize > 1:
                    partners = np.where(partners >= np.arange(bsize), partners + 1, partners)
                else:
                    partners = np.zeros(1, dtype=np.int64)
                own_losses, own_grads = _cosine_batch(z, cb)
                cross_losses, cross_grads = _cosine_batch(z[partners], cb)
                raw = own_losses - cross_losses + config.margin
                active = raw > 0
                losses = np.where(active, raw, 0.0)
                dz = np.where(active[:, None], own_grads, 0.0)
                np.subtract.at(dz, partners, np.where(active[:, None], cross_grads, 0.0))
            loss_sum += float(losses.sum())
            grads = backward(projector, cache, dz / bsize)
            optimizer.step(projector.parameters, grads.parameters)
        epoch_losses.append(loss_sum / n)
    return TrainReport(
        epoch_losses=epoch_losses,
        projector=projector,
        seed=config.seed,
        wall_time_s=time.perf_counter() - started,
    )


def project(p: MlpProjector, table: EmbeddingTable) -> EmbeddingTable:
    """Eval-mode projection of every table row; ids preserved."""
    if table.dim != p.input_dim:
        raise DimMismatchError(f"table dim {table.dim} != projector input {p.input_dim}")
    if len(table) == 0:
        return EmbeddingTable(ids=(), rows=np.zeros((0, p.output_dim), dtype=np.float32))
    z, _ = forward(p, table.rows, train=False)
    return EmbeddingTable(ids=table.ids, rows=np.asarray(z, dtype=np.float32))


def save_checkpoint(p: MlpProjector, path: str | Path) -> None:
    """Structured header plus little-endian binary32 blocks per layer."""
    header = {
        "version": CHECKPOINT_VERSION,
        "dims": list(p.dims),
        "activation": "relu",
        "dropout_rate": p.dropout_rate,
        "seed": p.seed,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for w, b in zip(p.weights, p.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f4").tobytes(order="C"))
            fh.write(np.ascontiguousarray(b, dtype="<f4").tobytes(order="C"))


def load_checkpoint(path: str | Path) -> MlpProjector:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if len(magic) < 4:
            raise TruncatedFileError("checkpoint shorter than magic")
        if magic != CHECKPOINT_MAGIC:
            raise BadMagicError(f"expected {CHECKPOINT_MAGIC!r}, got {magic!r}")
        raw_len = fh.read(4)
        if len(raw_len) < 4:
            raise TruncatedFileError("checkpoint ended inside header length")
        (header_len,) = struct.unpack("<I", raw_len)
        blob = fh.read(header_len)
        if len(blob) < header_len:
            raise TruncatedFileError("checkpoint ended inside header")
        header = json.loads(blob.decode("utf-8"))
        if header.get("version") != CHECKPOINT_VERSION:
            raise VersionMismatchError(f"unsupported checkpoint version {header.get('version')}")
        dims = [int(d) for d in header["dims"]]
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            wb = fh.read(fan_out * fan_in * 4)
            bb = fh.read(fan_out * 4)
            if len(wb) < fan_out * fan_in * 4 or len(bb) < fan_out * 4:
                raise TruncatedFileError("checkpoint ended inside parameter block")
            weights.append(np.frombuffer(wb, dtype="<f4").reshape(fan_out, fan_in).copy())
            biases.append(np.frombuffer(bb, dtype="<f4").copy())
        if fh.read(1):
            raise TruncatedFileError("trailing bytes after parameter blocks")
    return MlpProjector(
        weights=weights,
        biases=biases,
        dropout_rate=float(header["dropout_rate"]),
        seed=header.get("seed"),
    )
