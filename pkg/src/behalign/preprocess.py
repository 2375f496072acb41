"""Raw timestep records -> windowed, captioned, category-labelled samples.

Stages: segment on discontinuities, derive pointer deltas, threshold them into
pan flags, propagate every action's animation (shift by delay, span by length),
slide fixed windows, collapse per-frame labels with per-action cutoffs, then
caption and categorize each window.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .dataset import (
    ActionCatalog,
    Category,
    Device,
    GameProfile,
    MouseMode,
    TimestepRecord,
    detect_discontinuities,
)
from .errors import MalformedRowError

IDLE_CAPTION = "Idle"

MANIFEST_COLUMNS = ("sample_id", "actions", "caption", "panning", "navigation", "weapon")


@dataclass(frozen=True)
class CategoryFlags:
    panning: bool
    navigation: bool
    weapon: bool

    def get(self, name: str) -> bool:
        return {"panning": self.panning, "navigation": self.navigation, "weapon": self.weapon}[name]


@dataclass(frozen=True)
class WindowSample:
    """One window's collapsed action vector with caption and behaviour flags."""

    sample_id: str
    game_id: str
    session_id: str
    start_frame: int
    window_size: int
    actions: tuple[int, ...]
    caption: str
    categories: CategoryFlags


def mouse_deltas(records: Sequence[TimestepRecord], profile: GameProfile) -> np.ndarray:
    """Per-frame (dx, dy) for one contiguous segment; the first frame gets (0, 0).

    For auto-center games a delta whose endpoint lands within
    ``center_epsilon_px`` of the screen center is a game-initiated pointer
    reset and is replaced with (0, 0).
    """
    n = len(records)
    deltas = np.zeros((n, 2), dtype=np.int64)
    if n == 0:
        return deltas
    xs = np.fromiter((r.mouse_x for r in records), dtype=np.int64, count=n)
    ys = np.fromiter((r.mouse_y for r in records), dtype=np.int64, count=n)
    deltas[1:, 0] = np.diff(xs)
    deltas[1:, 1] = np.diff(ys)
    if profile.mouse_mode is MouseMode.AUTO_CENTER:
        cx, cy = profile.screen_center
        near_center = (xs - cx) ** 2 + (ys - cy) ** 2 <= profile.center_epsilon_px**2
        deltas[near_center] = 0
    return deltas


def discretize_pan(dx, dy, t_delta: int) -> np.ndarray:
    """Threshold deltas into (pan-left, pan-right, pan-up, pan-down) flags.

    Screen convention: y grows downward. Diagonals show up as two flags set
    at once, which is how the eight pan directions arise.
    """
    if t_delta < 1:
        raise ValueError("t_delta must be >= 1")
    dx = np.asarray(dx)
    dy = np.asarray(dy)
    flags = np.stack(
        [dx <= -t_delta, dx >= t_delta, dy <= -t_delta, dy >= t_delta], axis=-1
    )
    return flags.astype(np.uint8)


def propagate_labels(raw: Sequence[int] | np.ndarray, delay: int, length: int) -> np.ndarray:
    """Shift-and-span a raw press series into per-frame animation labels.

    A press at frame f labels frames [f+delay, f+delay+length-1]; overlapping
    presses union. Output is truncated to the input length.
    """
    if delay < 1 or length < 1:
        raise ValueError("delay and length must be >= 1")
    raw_arr = np.asarray(raw, dtype=bool)
    out = np.zeros_like(raw_arr)
    n = raw_arr.shape[0]
    for shift in range(delay, delay + length):
        if shift >= n:
            break
        out[shift:] |= raw_arr[: n - shift]
    return out.astype(np.uint8)


def make_windows(segment_length: int, window_size: int = 16, stride: int = 8) -> list[int]:
    """Start indices of sliding windows that fit entirely inside the segment."""
    if window_size < 1:
        raise ValueError("window_size must be >= 1")
    if not 1 <= stride <= window_size:
        raise ValueError("stride must satisfy 1 <= stride <= window_size")
    return list(range(0, segment_length - window_size + 1, stride))


def collapse_window(frame_labels: np.ndarray, catalog: ActionCatalog) -> np.ndarray:
    """Collapse a (window_size, n_actions) label slice to one bit per action.

    An action is present iff it is labelled on at least ``cutoff`` frames of
    the window.
    """
    frame_labels = np.asarray(frame_labels)
    if frame_labels.ndim != 2 or frame_labels.shape[1] != catalog.size:
        raise ValueError(f"expected (window, {catalog.size}) labels, got {frame_labels.shape}")
    cutoffs = np.array([e.cutoff for e in catalog.entries])
    counts = frame_labels.sum(axis=0)
    return (counts >= cutoffs).astype(np.uint8)


def semantic_action_mapper(actions: Sequence[int] | np.ndarray, catalog: ActionCatalog) -> str:
    """Map a collapsed action vector to its caption: active phrases in catalog
    order joined by ", "; the all-zero vector maps to the reserved "Idle"."""
    actions = np.asarray(actions)
    if actions.shape != (catalog.size,):
        raise ValueError(f"expected {catalog.size} action bits, got shape {actions.shape}")
    phrases = [e.phrase for e, bit in zip(catalog.entries, actions) if bit]
    return ", ".join(phrases) if phrases else IDLE_CAPTION


def categorize(actions: Sequence[int] | np.ndarray, catalog: ActionCatalog) -> CategoryFlags:
    """OR the action bits of each behaviour category into one flag per category."""
    actions = np.asarray(actions)

    def any_of(cat: Category) -> bool:
        positions = catalog.category_positions(cat)
        return bool(actions[list(positions)].any()) if positions else False

    return CategoryFlags(
        panning=any_of(Category.PANNING),
        navigation=any_of(Category.NAVIGATION),
        weapon=any_of(Category.WEAPON),
    )


def propagated_frame_labels(
    records: Sequence[TimestepRecord], profile: GameProfile, catalog: ActionCatalog
) -> np.ndarray:
    """Per-frame animation labels (n, n_actions) for one contiguous segment.

    Pan flags come from thresholded pointer deltas, keyed flags from the raw
    key bits; each action column is then propagated with its own delay/length.
    """
    effective = catalog.with_overrides(profile.action_overrides)
    n = len(records)
    raw = np.zeros((n, effective.size), dtype=np.uint8)
    if n == 0:
        return raw
    deltas = mouse_deltas(records, profile)
    pan = discretize_pan(deltas[:, 0], deltas[:, 1], profile.delta_threshold_px)
    for flag_col, pos in enumerate(catalog.mouse_move_positions):
        raw[:, pos] = pan[:, flag_col]
    keyed_positions = [i for i, e in enumerate(effective.entries) if e.device is not Device.MOUSE_MOVE]
    keys = np.array([r.keys for r in records], dtype=np.uint8)
    if keys.shape[1] != len(keyed_positions):
        raise MalformedRowError(
            f"records carry {keys.shape[1]} key bits, catalog has {len(keyed_positions)} keyed actions"
        )
    raw[:, keyed_positions] = keys
    labels = np.zeros_like(raw)
    for col, entry in enumerate(effective.entries):
        labels[:, col] = propagate_labels(raw[:, col], entry.anim_delay, entry.anim_length)
    return labels


def run_pipeline(
    records: Sequence[TimestepRecord],
    profile: GameProfile,
    catalog: ActionCatalog,
    *,
    window_size: int = 16,
    stride: int = 8,
    max_gap_ms: int = 500,
) -> list[WindowSample]:
    """Full preprocessing over one game's record stream; windows never cross
    discontinuity boundaries."""
    effective = catalog.with_overrides(profile.action_overrides)
    for entry in effective.entries:
        if entry.cutoff > window_size:
            raise ValueError(f"{entry.action_id}: cutoff {entry.cutoff} exceeds window {window_size}")
    samples: list[WindowSample] = []
    for seg_start, seg_stop in detect_discontinuities(records, max_gap_ms):
        segment = records[seg_start:seg_stop]
        labels = propagated_frame_labels(segment, profile, catalog)
        for start in make_windows(len(segment), window_size, stride):
            window_labels = labels[start : start + window_size]
            actions = collapse_window(window_labels, effective)
            caption = semantic_action_mapper(actions, effective)
            flags = categorize(actions, effective)
            first = segment[start]
            sample_id = f"{first.game_id}/{first.session_id}/{first.frame_index}"
            samples.append(
                WindowSample(
                    sample_id=sample_id,
                    game_id=first.game_id,
                    session_id=first.session_id,
                    start_frame=first.frame_index,
                    window_size=window_size,
                    actions=tuple(int(a) for a in actions),
                    caption=caption,
                    categories=flags,
                )
            )
    return samples


def write_manifest(samples: Iterable[WindowSample], sink: str | Path | IO) -> None:
    """One CSV record per window: sample_id, packed action bits, caption, flags."""
    if isinstance(sink, (str, Path)):
        fh, close = open(sink, "w", encoding="utf-8", newline=""), True
    else:
        fh, close = sink, False
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        for s in samples:
            writer.writerow(
                [
                    s.sample_id,
                    "".join(str(b) for b in s.actions),
                    s.caption,
                    int(s.categories.panning),
                    int(s.categories.navigation),
                    int(s.categories.weapon),
                ]
            )
    finally:
        if close:
            fh.close()


def read_manifest(source: str | Path | IO, *, window_size: int = 16) -> list[WindowSample]:
    """Inverse of write_manifest (window_size is not stored in the file)."""
    if isinstance(source, (str, Path)):
        fh, close = open(source, "r", encoding="utf-8", newline=""), True
    else:
        fh, close = source, False
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRowError("manifest has no header line") from None
        if tuple(header) != MANIFEST_COLUMNS:
            raise MalformedRowError(f"unexpected manifest header {header}")
        samples: list[WindowSample] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(MANIFEST_COLUMNS):
                raise MalformedRowError(f"line {lineno}: expected {len(MANIFEST_COLUMNS)} fields")
            sample_id, bits, caption, pan, nav, weap = row
            parts = sample_id.split("/")
            if len(parts) != 3:
                raise MalformedRowError(f"line {lineno}: bad sample_id {sample_id!r}")
            if set(bits) - {"0", "1"}:
                raise MalformedRowError(f"line {lineno}: bad action bits {bits!r}")
            samples.append(
                WindowSample(
                    sample_id=sample_id,
                    game_id=parts[0],
                    session_id=parts[1],
                    start_frame=int(parts[2]),
                    window_size=window_size,
                    actions=tuple(int(b) for b in bits),
                    caption=caption,
                    categories=CategoryFlags(pan == "1", nav == "1", weap == "1"),
                )
            )
        return samples
    finally:
        if close:
            fh.close()
