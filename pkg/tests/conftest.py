from __future__ import annotations

import io

import numpy as np
import pytest

from behalign.dataset import ActionCatalog, GameProfile, MouseMode, TimestepRecord, default_catalog


@pytest.fixture(scope="session")
def catalog() -> ActionCatalog:
    return default_catalog()


@pytest.fixture()
def freeform_profile() -> GameProfile:
    return GameProfile(game_id="g", mouse_mode=MouseMode.FREE_FORM, delta_threshold_px=20)


@pytest.fixture()
def autocenter_profile() -> GameProfile:
    return GameProfile(
        game_id="g",
        mouse_mode=MouseMode.AUTO_CENTER,
        delta_threshold_px=20,
        screen_center=(960, 540),
        center_epsilon_px=2,
    )


def make_records(
    catalog: ActionCatalog,
    n: int,
    *,
    game: str = "g",
    session: str = "s0",
    presses: dict[str, list[int]] | None = None,
    mouse: list[tuple[int, int]] | None = None,
    frame_ms: int = 62,
    start_frame: int = 0,
) -> list[TimestepRecord]:
    """Build a contiguous record stream; ``presses`` maps action_id to the
    frame indices (0-based within the stream) where the key is down."""
    keyed_ids = [e.action_id for e in catalog.keyed_entries]
    keys = np.zeros((n, len(keyed_ids)), dtype=int)
    for action_id, frames in (presses or {}).items():
        keys[list(frames), keyed_ids.index(action_id)] = 1
    records = []
    for i in range(n):
        mx, my = mouse[i] if mouse else (500, 400)
        records.append(
            TimestepRecord(
                game_id=game,
                session_id=session,
                frame_index=start_frame + i,
                timestamp_ms=(start_frame + i) * frame_ms,
                mouse_x=mx,
                mouse_y=my,
                keys=tuple(int(k) for k in keys[i]),
            )
        )
    return records


def log_text(header: list[str], rows: list[list]) -> io.StringIO:
    lines = [",".join(header)] + [",".join(str(c) for c in row) for row in rows]
    return io.StringIO("\n".join(lines) + "\n")
