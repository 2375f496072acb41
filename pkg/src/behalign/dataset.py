"""Synchronized gameplay-log format, game profiles, and the canonical FPS action catalog."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

from .errors import (
    MalformedRowError,
    NonMonotonicFrameError,
    UnknownActionError,
)


class Device(str, Enum):
    MOUSE_MOVE = "mouse_move"
    MOUSE_BUTTON = "mouse_button"
    KEY = "key"


class Category(str, Enum):
    PANNING = "panning"
    NAVIGATION = "navigation"
    WEAPON = "weapon"
    NONE = "none"


class MouseMode(str, Enum):
    AUTO_CENTER = "auto_center"
    FREE_FORM = "free_form"


@dataclass(frozen=True)
class ActionEntry:
    """One collapsed action label with its animation hyper-parameters.

    ``keys`` lists the raw input names that merge into this label (several
    physical keys can map to one action); mouse-move entries have no keys
    because their activity is derived from pointer deltas.
    """

    action_id: str
    device: Device
    phrase: str
    category: Category
    anim_delay: int = 1
    anim_length: int = 2
    cutoff: int = 2
    keys: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.action_id:
            raise ValueError("action_id must be non-empty")
        if not self.phrase:
            raise ValueError(f"{self.action_id}: phrase must be non-empty")
        if self.anim_delay < 1:
            raise ValueError(f"{self.action_id}: anim_delay must be >= 1")
        if self.anim_length < 1:
            raise ValueError(f"{self.action_id}: anim_length must be >= 1")
        if self.cutoff < 1:
            raise ValueError(f"{self.action_id}: cutoff must be >= 1")
        if self.device is Device.MOUSE_MOVE and self.keys:
            raise ValueError(f"{self.action_id}: mouse-move entries carry no raw keys")
        if self.device is not Device.MOUSE_MOVE and not self.keys:
            raise ValueError(f"{self.action_id}: keyed entries need at least one raw key")


@dataclass(frozen=True)
class ActionCatalog:
    """Ordered collapsed action labels; order is the canonical caption/report order."""

    entries: tuple[ActionEntry, ...]

    def __post_init__(self) -> None:
        ids = [e.action_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate action_id in catalog")
        phrases = [e.phrase for e in self.entries]
        if len(set(phrases)) != len(phrases):
            raise ValueError("duplicate phrase in catalog")
        raw: list[str] = []
        for e in self.entries:
            raw.extend(e.keys)
        if len(set(raw)) != len(raw):
            raise ValueError("a raw key is claimed by more than one entry")

    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def keyed_entries(self) -> tuple[ActionEntry, ...]:
        return tuple(e for e in self.entries if e.device is not Device.MOUSE_MOVE)

    @property
    def mouse_move_positions(self) -> tuple[int, ...]:
        return tuple(i for i, e in enumerate(self.entries) if e.device is Device.MOUSE_MOVE)

    @property
    def raw_entry_count(self) -> int:
        """Number of raw recorded inputs before merging (mouse moves count as one each)."""
        return len(self.mouse_move_positions) + sum(len(e.keys) for e in self.keyed_entries)

    def index_of(self, action_id: str) -> int:
        for i, e in enumerate(self.entries):
            if e.action_id == action_id:
                return i
        raise KeyError(action_id)

    def lookup(self, name: str) -> ActionEntry:
        """Find an entry by action_id or by phrase."""
        for e in self.entries:
            if e.action_id == name or e.phrase == name:
                return e
        raise KeyError(name)

    def category_positions(self, category: Category) -> tuple[int, ...]:
        return tuple(i for i, e in enumerate(self.entries) if e.category is category)

    def keyed_position(self, name: str) -> int:
        """Position within the keyed-action vector for a raw key name or action_id."""
        pos = 0
        for e in self.entries:
            if e.device is Device.MOUSE_MOVE:
                continue
            if e.action_id == name or name in e.keys:
                return pos
            pos += 1
        raise KeyError(name)

    def with_overrides(self, overrides: Mapping[str, Mapping[str, int]]) -> "ActionCatalog":
        """Return a catalog with per-action animation fields replaced.

        ``overrides`` maps action_id to replacement fields, e.g.
        ``{"reload": {"anim_length": 12, "cutoff": 4}}``.
        """
        allowed = {"anim_delay", "anim_length", "cutoff"}
        by_id = {e.action_id: e for e in self.entries}
        for action_id, fields in overrides.items():
            if action_id not in by_id:
                raise UnknownActionError(f"override names unknown action {action_id!r}")
            bad = set(fields) - allowed
            if bad:
                raise ValueError(f"{action_id}: cannot override {sorted(bad)}")
            by_id[action_id] = replace(by_id[action_id], **fields)
        return ActionCatalog(tuple(by_id[e.action_id] for e in self.entries))


def default_catalog() -> ActionCatalog:
    """The canonical 19-raw-input FPS catalog, collapsed to 16 action labels.

    Row order: the six mouse actions first, then the keyboard actions.
    Crouch merges two physical keys; weapon slots 1/2/3 merge into one label.
    """
    pan = dict(device=Device.MOUSE_MOVE, category=Category.PANNING)
    return ActionCatalog(
        (
            ActionEntry("pan_left", phrase="Pan Left", **pan),
            ActionEntry("pan_right", phrase="Pan Right", **pan),
            ActionEntry("pan_up", phrase="Pan Up", **pan),
            ActionEntry("pan_down", phrase="Pan Down", **pan),
            ActionEntry("fire", Device.MOUSE_BUTTON, "Fire Gun", Category.WEAPON, keys=("lclick",)),
            ActionEntry("aim", Device.MOUSE_BUTTON, "Aim Gun", Category.WEAPON, keys=("rclick",)),
            ActionEntry("forward", Device.KEY, "Move Forward", Category.NAVIGATION, keys=("w",)),
            ActionEntry("strafe_left", Device.KEY, "Strafe Left", Category.NAVIGATION, keys=("a",)),
            ActionEntry("backward", Device.KEY, "Move Backward", Category.NAVIGATION, keys=("s",)),
            ActionEntry("strafe_right", Device.KEY, "Strafe Right", Category.NAVIGATION, keys=("d",)),
            ActionEntry("reload", Device.KEY, "Reload Gun", Category.WEAPON,
                        anim_delay=3, anim_length=16, cutoff=6, keys=("r",)),
            ActionEntry("jump", Device.KEY, "Jump", Category.NAVIGATION, keys=("space",)),
            ActionEntry("sprint", Device.KEY, "Sprint", Category.NAVIGATION, cutoff=6, keys=("lshift",)),
            ActionEntry("crouch", Device.KEY, "Crouch", Category.NAVIGATION, keys=("lctrl", "c")),
            ActionEntry("change_gun", Device.KEY, "Change Gun", Category.WEAPON,
                        anim_delay=3, anim_length=8, cutoff=6, keys=("1", "2", "3")),
            ActionEntry("interact", Device.KEY, "Interact", Category.NONE,
                        anim_delay=3, anim_length=5, cutoff=3, keys=("f",)),
        )
    )


@dataclass(frozen=True)
class GameProfile:
    """Per-game mouse handling and pan-threshold metadata."""

    game_id: str
    mouse_mode: MouseMode
    delta_threshold_px: int = 20
    screen_center: tuple[int, int] = (960, 540)
    center_epsilon_px: int = 2
    action_overrides: Mapping[str, Mapping[str, int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.game_id or any(ch in self.game_id for ch in "/,\n"):
            raise ValueError(f"bad game_id {self.game_id!r}")
        if self.delta_threshold_px < 1:
            raise ValueError(f"{self.game_id}: delta_threshold_px must be >= 1")
        if self.center_epsilon_px < 0:
            raise ValueError(f"{self.game_id}: center_epsilon_px must be >= 0")
        cx, cy = self.screen_center
        if self.center_epsilon_px >= min(2 * cx, 2 * cy) / 4:
            raise ValueError(f"{self.game_id}: center_epsilon_px too large for screen")


@dataclass(frozen=True)
class TimestepRecord:
    """One synchronized sample: pointer coordinates plus the keyed-action bit vector."""

    game_id: str
    session_id: str
    frame_index: int
    timestamp_ms: int
    mouse_x: int
    mouse_y: int
    keys: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.frame_index < 0 or self.timestamp_ms < 0:
            raise ValueError("frame_index and timestamp_ms must be non-negative")
        if any(k not in (0, 1) for k in self.keys):
            raise ValueError("keys entries must be 0 or 1")


LOG_FIXED_COLUMNS = ("game", "session", "frame", "ts_ms", "mouse_x", "mouse_y")


def _open_text(source: str | Path | IO) -> tuple[IO, bool]:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline=""), True
    if isinstance(source, io.TextIOBase):
        return source, False
    # byte stream
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def parse_log(source: str | Path | IO, catalog: ActionCatalog) -> list[TimestepRecord]:
    """Parse a CSV gameplay log into validated records, in stream order.

    Header: ``game,session,frame,ts_ms,mouse_x,mouse_y,<action...>`` where the
    action columns name either canonical action_ids or raw key names; raw keys
    merging into one label are OR-ed together.
    """
    fh, close = _open_text(source)
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRowError("log has no header line") from None
        if tuple(header[: len(LOG_FIXED_COLUMNS)]) != LOG_FIXED_COLUMNS:
            raise MalformedRowError(
                f"header must start with {','.join(LOG_FIXED_COLUMNS)}, got {header[:6]}"
            )
        n_keyed = len(catalog.keyed_entries)
        column_positions: list[int] = []
        for name in header[len(LOG_FIXED_COLUMNS):]:
            try:
                column_positions.append(catalog.keyed_position(name))
            except KeyError:
                raise UnknownActionError(f"header names unknown action {name!r}") from None

        records: list[TimestepRecord] = []
        last_frame: dict[tuple[str, str], int] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedRowError(
                    f"line {lineno}: expected {len(header)} fields, got {len(row)}"
                )
            game, session = row[0], row[1]
            try:
                frame, ts_ms = int(row[2]), int(row[3])
                mx, my = int(row[4]), int(row[5])
            except ValueError as exc:
                raise MalformedRowError(f"line {lineno}: {exc}") from None
            keys = [0] * n_keyed
            for pos, cell in zip(column_positions, row[len(LOG_FIXED_COLUMNS):]):
                if cell == "1":
                    keys[pos] = 1
                elif cell != "0":
                    raise MalformedRowError(f"line {lineno}: action cell must be 0/1, got {cell!r}")
            stream = (game, session)
            if stream in last_frame and frame <= last_frame[stream]:
                raise NonMonotonicFrameError(
                    f"line {lineno}: frame {frame} <= previous {last_frame[stream]} in {game}/{session}"
                )
            last_frame[stream] = frame
            try:
                records.append(
                    TimestepRecord(game, session, frame, ts_ms, mx, my, tuple(keys))
                )
            except ValueError as exc:
                raise MalformedRowError(f"line {lineno}: {exc}") from None
        return records
    finally:
        if close:
            fh.close()


def serialize_log(records: Iterable[TimestepRecord], catalog: ActionCatalog, sink: str | Path | IO) -> None:
    """Write records in the canonical log format (one column per keyed action_id)."""
    if isinstance(sink, (str, Path)):
        fh, close = open(sink, "w", encoding="utf-8", newline=""), True
    elif isinstance(sink, io.TextIOBase):
        fh, close = sink, False
    else:
        fh, close = io.TextIOWrapper(sink, encoding="utf-8", newline=""), False
    try:
        writer = csv.writer(fh, lineterminator="\n")
        keyed_ids = [e.action_id for e in catalog.keyed_entries]
        writer.writerow(list(LOG_FIXED_COLUMNS) + keyed_ids)
        for r in records:
            if len(r.keys) != len(keyed_ids):
                raise MalformedRowError(
                    f"record keys length {len(r.keys)} != keyed-action count {len(keyed_ids)}"
                )
            writer.writerow(
                [r.game_id, r.session_id, r.frame_index, r.timestamp_ms, r.mouse_x, r.mouse_y]
                + list(r.keys)
            )
        if not close:
            fh.flush()
            if isinstance(fh, io.TextIOWrapper):
                fh.detach()
    finally:
        if close:
            fh.close()


def detect_discontinuities(
    records: Sequence[TimestepRecord], max_gap_ms: int = 500
) -> list[tuple[int, int]]:
    """Split a record stream into contiguous half-open index segments.

    A new segment starts whenever the session changes, the timestamp gap
    exceeds ``max_gap_ms``, or the frame index jumps by more than one.
    """
    if max_gap_ms < 1:
        raise ValueError("max_gap_ms must be >= 1")
    if not records:
        return []
    segments: list[tuple[int, int]] = []
    start = 0
    for i in range(1, len(records)):
        prev, cur = records[i - 1], records[i]
        breaks = (
            (cur.game_id, cur.session_id) != (prev.game_id, prev.session_id)
            or cur.timestamp_ms - prev.timestamp_ms > max_gap_ms
            or cur.frame_index - prev.frame_index > 1
        )
        if breaks:
            segments.append((start, i))
            start = i
    segments.append((start, len(records)))
    return segments


def load_profiles(source: str | Path | IO) -> tuple[dict[str, GameProfile], dict[str, dict[str, int]]]:
    """Load game profiles and global catalog overrides from a JSON config.

    Layout::

        {"games": {"<game_id>": {"mouse_mode": "free_form"|"auto_center",
                                 "delta_threshold_px": 20,
                                 "screen_center": [960, 540],
                                 "center_epsilon_px": 2,
                                 "action_overrides": {"reload": {"anim_length": 12}}}},
         "actions": {"<action_id>": {"anim_delay"|"anim_length"|"cutoff": int}}}
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = json.load(source)
    profiles: dict[str, GameProfile] = {}
    for game_id, entry in doc.get("games", {}).items():
        profiles[game_id] = GameProfile(
            game_id=game_id,
            mouse_mode=MouseMode(entry["mouse_mode"]),
            delta_threshold_px=int(entry.get("delta_threshold_px", 20)),
            screen_center=tuple(entry.get("screen_center", (960, 540))),  # type: ignore[arg-type]
            center_epsilon_px=int(entry.get("center_epsilon_px", 2)),
            action_overrides={
                k: {kk: int(vv) for kk, vv in v.items()}
                for k, v in entry.get("action_overrides", {}).items()
            },
        )
    catalog_overrides = {
        k: {kk: int(vv) for kk, vv in v.items()} for k, v in doc.get("actions", {}).items()
    }
    return profiles, catalog_overrides


def save_profiles(profiles: Mapping[str, GameProfile], sink: str | Path | IO) -> None:
    """Write profiles in the format accepted by load_profiles."""
    doc = {
        "games": {
            p.game_id: {
                "mouse_mode": p.mouse_mode.value,
                "delta_threshold_px": p.delta_threshold_px,
                "screen_center": list(p.screen_center),
                "center_epsilon_px": p.center_epsilon_px,
                "action_overrides": {k: dict(v) for k, v in p.action_overrides.items()},
            }
            for p in profiles.values()
        }
    }
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        json.dump(doc, sink, indent=2, sort_keys=True)
        sink.write("\n")
