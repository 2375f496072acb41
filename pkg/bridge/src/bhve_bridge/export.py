"""Batched export of encoder outputs into BHVE tables, manifest order kept."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .encoders import FRAME_SIZE, WINDOW_FRAMES, EncoderSpec, build_encoder
from .errors import FrameSourceError
from .formats import read_manifest_captions, write_bhve_table


def _l2_rows(rows: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    return np.where(norms > eps, rows / np.where(norms > eps, norms, 1.0), 0.0).astype(np.float32)


def export_text_embeddings(
    manifest_path: str | Path,
    out_path: str | Path,
    spec: EncoderSpec,
    *,
    batch_size: int = 64,
    seed: int = 0,
    encoder=None,
) -> int:
    """Encode every manifest caption; one L2-normalized row per window.

    Duplicate captions are encoded once and reused. Returns the row count.
    """
    pairs = read_manifest_captions(manifest_path)
    encoder = encoder or build_encoder(spec, seed)
    unique = sorted({caption for _, caption in pairs})
    encoded: dict[str, np.ndarray] = {}
    for lo in range(0, len(unique), batch_size):
        batch = unique[lo : lo + batch_size]
        for caption, row in zip(batch, encoder.encode(batch)):
            encoded[caption] = row
    rows = (
        np.stack([encoded[caption] for _, caption in pairs])
        if pairs
        else np.zeros((0, spec.dim), dtype=np.float32)
    )
    if rows.shape[1] != spec.dim:
        raise FrameSourceError(
            f"encoder produced dim {rows.shape[1]}, spec says {spec.dim}"
        )
    write_bhve_table([sample_id for sample_id, _ in pairs], _l2_rows(rows), out_path)
    return len(pairs)


def frame_file_for(sample_id: str) -> str:
    """Window frame stacks live in one .npy per sample, '/' mapped to '__'."""
    return sample_id.replace("/", "__") + ".npy"


def _load_clip(frames_dir: Path, sample_id: str) -> np.ndarray:
    path = frames_dir / frame_file_for(sample_id)
    if not path.exists():
        raise FrameSourceError(f"no frame stack for {sample_id!r} at {path}")
    clip = np.load(path)
    expected = (WINDOW_FRAMES, FRAME_SIZE, FRAME_SIZE, 3)
    if clip.shape != expected:
        raise FrameSourceError(
            f"{sample_id!r}: frame stack shape {clip.shape}, expected {expected}"
        )
    return clip


def export_video_embeddings(
    manifest_path: str | Path,
    frames_dir: str | Path,
    out_path: str | Path,
    spec: EncoderSpec,
    *,
    batch_size: int = 8,
    seed: int = 0,
    encoder=None,
) -> int:
    """Encode each window's 16-frame stack; one L2-normalized row per window."""
    pairs = read_manifest_captions(manifest_path)
    frames_dir = Path(frames_dir)
    encoder = encoder or build_encoder(spec, seed)
    chunks: list[np.ndarray] = []
    for lo in range(0, len(pairs), batch_size):
        batch_ids = [sample_id for sample_id, _ in pairs[lo : lo + batch_size]]
        clips = np.stack([_load_clip(frames_dir, sample_id) for sample_id in batch_ids])
        chunks.append(encoder.encode(clips))
    rows = np.vstack(chunks) if chunks else np.zeros((0, spec.dim), dtype=np.float32)
    if rows.shape[1] != spec.dim:
        raise FrameSourceError(f"encoder produced dim {rows.shape[1]}, spec says {spec.dim}")
    write_bhve_table([sample_id for sample_id, _ in pairs], _l2_rows(rows), out_path)
    return len(pairs)
