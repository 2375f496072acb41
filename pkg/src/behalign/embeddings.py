"""Embedding tables with a bit-exact on-disk format, plus the deterministic
phrase-sum caption embedder used as the desk-scale text encoder."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from .dataset import ActionCatalog
from .errors import (
    BadMagicError,
    DimMismatchError,
    MissingEmbeddingError,
    TruncatedFileError,
    UnknownPhraseError,
    VersionMismatchError,
)
from .preprocess import IDLE_CAPTION, WindowSample

BHVE_MAGIC = b"BHVE"
BHVE_VERSION = 1
NORM_EPS = 1e-12


def l2_normalize(x: np.ndarray | Sequence[float], axis: int = -1) -> np.ndarray:
    """Scale vectors to unit L2 norm; (near-)zero vectors come back as zeros."""
    arr = np.asarray(x, dtype=np.result_type(np.asarray(x).dtype, np.float32))
    norms = np.linalg.norm(arr, axis=axis, keepdims=True)
    safe = np.where(norms > NORM_EPS, norms, 1.0)
    out = arr / safe
    return np.where(norms > NORM_EPS, out, np.zeros_like(arr))


@dataclass(frozen=True)
class EmbeddingTable:
    """Id-keyed matrix of float32 rows; immutable after construction."""

    ids: tuple[str, ...]
    rows: np.ndarray

    def __post_init__(self) -> None:
        rows = np.ascontiguousarray(self.rows, dtype=np.float32)
        if rows.ndim != 2:
            raise ValueError(f"rows must be 2-D, got shape {rows.shape}")
        if rows.shape[0] != len(self.ids):
            raise ValueError(f"{len(self.ids)} ids but {rows.shape[0]} rows")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate ids in table")
        if rows.size and not np.isfinite(rows).all():
            raise ValueError("rows contain non-finite values")
        if any("\n" in i or not i for i in self.ids):
            raise ValueError("ids must be non-empty single-line strings")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def dim(self) -> int:
        return int(self.rows.shape[1])

    def __len__(self) -> int:
        return len(self.ids)

    def row_for(self, sample_id: str) -> np.ndarray:
        return self.rows[self.ids.index(sample_id)]


def _ids_path(path: str | Path) -> Path:
    return Path(str(path) + ".ids")


def write_bhve(rows: np.ndarray, sink: IO[bytes]) -> None:
    """Write the raw binary block: magic, u32le version/count/dim, f32le rows."""
    rows = np.ascontiguousarray(rows, dtype="<f4")
    if rows.ndim != 2:
        raise ValueError("rows must be 2-D")
    sink.write(BHVE_MAGIC)
    sink.write(struct.pack("<III", BHVE_VERSION, rows.shape[0], rows.shape[1]))
    sink.write(rows.tobytes(order="C"))


def read_bhve(source: IO[bytes]) -> np.ndarray:
    """Read the raw binary block written by write_bhve, strictly framed."""
    magic = source.read(4)
    if len(magic) < 4:
        raise TruncatedFileError("file shorter than magic")
    if magic != BHVE_MAGIC:
        raise BadMagicError(f"expected {BHVE_MAGIC!r}, got {magic!r}")
    header = source.read(12)
    if len(header) < 12:
        raise TruncatedFileError("file ended inside header")
    version, count, dim = struct.unpack("<III", header)
    if version != BHVE_VERSION:
        raise VersionMismatchError(f"unsupported version {version}")
    expected = count * dim * 4
    payload = source.read(expected)
    if len(payload) < expected:
        raise TruncatedFileError(f"expected {expected} payload bytes, got {len(payload)}")
    if source.read(1):
        raise TruncatedFileError("trailing bytes after payload")
    rows = np.frombuffer(payload, dtype="<f4").reshape(count, dim)
    return rows.astype(np.float32, copy=True)


def write_table(table: EmbeddingTable, path: str | Path) -> None:
    """Write the binary matrix to ``path`` and the ids to the ``.ids`` sibling."""
    with open(path, "wb") as fh:
        write_bhve(table.rows, fh)
    with open(_ids_path(path), "w", encoding="utf-8", newline="\n") as fh:
        for sample_id in table.ids:
            fh.write(sample_id + "\n")


def read_table(path: str | Path) -> EmbeddingTable:
    """Inverse of write_table; bit-exact including row order."""
    with open(path, "rb") as fh:
        rows = read_bhve(fh)
    with open(_ids_path(path), "r", encoding="utf-8", newline="\n") as fh:
        ids = tuple(line.rstrip("\n") for line in fh if line != "")
    if len(ids) != rows.shape[0]:
        raise DimMismatchError(
            f"ids file has {len(ids)} entries but header declares {rows.shape[0]} rows"
        )
    return EmbeddingTable(ids=ids, rows=rows)


@dataclass(frozen=True)
class TextEmbedderConfig:
    """Seeded phrase-sum embedder settings; vocabulary covers every catalog phrase."""

    dim: int = 512
    seed: int = 0
    phrases: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if IDLE_CAPTION not in self.phrases:
            object.__setattr__(self, "phrases", self.phrases + (IDLE_CAPTION,))

    @classmethod
    def from_catalog(cls, catalog: ActionCatalog, *, dim: int = 512, seed: int = 0) -> "TextEmbedderConfig":
        return cls(dim=dim, seed=seed, phrases=tuple(e.phrase for e in catalog.entries))


def _phrase_vector(phrase: str, config: TextEmbedderConfig) -> np.ndarray:
    # Sha-2 of the phrase keys the stream so the mapping is stable across
    # platforms and independent of vocabulary order.
    digest = hashlib.sha256(phrase.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed, *words])))
    vec = rng.standard_normal(config.dim)
    return l2_normalize(vec)


class TextEmbedder:
    """Deterministic caption embedder: unit phrase vectors summed and re-normalized.

    Captions sharing phrases land closer together than unrelated captions,
    which is the one geometric property alignment training relies on.
    """

    def __init__(self, config: TextEmbedderConfig):
        self.config = config
        self._vectors = {p: _phrase_vector(p, config) for p in config.phrases}

    def embed(self, caption: str) -> np.ndarray:
        total = np.zeros(self.config.dim, dtype=np.float64)
        for phrase in caption.split(", "):
            try:
                total += self._vectors[phrase]
            except KeyError:
                raise UnknownPhraseError(f"unknown phrase {phrase!r} in caption {caption!r}") from None
        return l2_normalize(total).astype(np.float32)

    def embed_all(self, captions: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(captions), self.config.dim), dtype=np.float32)
        for i, caption in enumerate(captions):
            out[i] = self.embed(caption)
        return out


def embed_caption(caption: str, config: TextEmbedderConfig) -> np.ndarray:
    """One-off embedding; build a TextEmbedder when embedding many captions."""
    return TextEmbedder(config).embed(caption)


@dataclass(frozen=True)
class PairedDataset:
    """Embedding rows joined to their window samples, in manifest order."""

    rows: np.ndarray
    samples: tuple[WindowSample, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.rows.shape[0] != len(self.samples):
            raise ValueError("rows/samples length mismatch")

    @property
    def dim(self) -> int:
        return int(self.rows.shape[1])

    def __len__(self) -> int:
        return len(self.samples)


def join(table: EmbeddingTable, samples: Sequence[WindowSample]) -> PairedDataset:
    """Pair each manifest sample with its table row, preserving manifest order."""
    index = {sample_id: i for i, sample_id in enumerate(table.ids)}
    missing = tuple(s.sample_id for s in samples if s.sample_id not in index)
    if missing:
        raise MissingEmbeddingError(missing)
    positions = [index[s.sample_id] for s in samples]
    rows = table.rows[positions] if samples else table.rows[:0]
    return PairedDataset(rows=np.ascontiguousarray(rows), samples=tuple(samples))
