"""The toolkit's public wire formats, implemented independently.

BHVE: magic ``BHVE``, little-endian u32 version=1/count/dim, then count x dim
IEEE-754 binary32 values row-major; row ids live in ``<file>.ids`` (one per
line, same order). Manifest: CSV with header
``sample_id,actions,caption,panning,navigation,weapon``.
"""

from __future__ import annotations

import csv
import os
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ManifestError

BHVE_MAGIC = b"BHVE"
BHVE_VERSION = 1
MANIFEST_COLUMNS = ("sample_id", "actions", "caption", "panning", "navigation", "weapon")


def write_bhve_table(ids: Sequence[str], rows: np.ndarray, path: str | Path) -> None:
    """Atomically write the binary table and its ids sidecar."""
    rows = np.ascontiguousarray(rows, dtype="<f4")
    if rows.ndim != 2 or rows.shape[0] != len(ids):
        raise ValueError(f"need one row per id, got {rows.shape} for {len(ids)} ids")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(BHVE_MAGIC)
        fh.write(struct.pack("<III", BHVE_VERSION, rows.shape[0], rows.shape[1]))
        fh.write(rows.tobytes(order="C"))
    ids_tmp = path.with_name(path.name + ".ids.tmp")
    with open(ids_tmp, "w", encoding="utf-8", newline="\n") as fh:
        for sample_id in ids:
            fh.write(sample_id + "\n")
    os.replace(tmp, path)
    os.replace(ids_tmp, Path(str(path) + ".ids"))


def read_manifest_captions(path: str | Path) -> list[tuple[str, str]]:
    """(sample_id, caption) pairs in manifest row order."""
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise ManifestError(f"cannot open manifest: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError("manifest has no header line") from None
        if tuple(header) != MANIFEST_COLUMNS:
            raise ManifestError(f"unexpected manifest header {header}")
        out: list[tuple[str, str]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(MANIFEST_COLUMNS):
                raise ManifestError(f"line {lineno}: expected {len(MANIFEST_COLUMNS)} fields")
            out.append((row[0], row[2]))
        return out
