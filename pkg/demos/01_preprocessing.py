"""Walk through the preprocessing stages on a tiny hand-written log.

Builds a 48-frame stream with steady forward movement, a reload press at
frame 10, and a burst of rightward mouse movement, then shows how deltas,
pan discretization, label propagation, windowing, timestep collapse, and
the semantic mapper combine into captioned window samples.

Run: python demos/01_preprocessing.py
"""

from __future__ import annotations

import numpy as np

from behalign import (
    GameProfile,
    MouseMode,
    TimestepRecord,
    default_catalog,
    discretize_pan,
    mouse_deltas,
    propagate_labels,
    run_pipeline,
)

catalog = default_catalog()
profile = GameProfile(game_id="demo", mouse_mode=MouseMode.FREE_FORM, delta_threshold_px=20)

keyed_ids = [e.action_id for e in catalog.keyed_entries]
records = []
x = 500
for frame in range(48):
    keys = [0] * len(keyed_ids)
    keys[keyed_ids.index("forward")] = 1          # W held for the whole clip
    if frame == 10:
        keys[keyed_ids.index("reload")] = 1       # single R press
    if 20 <= frame < 28:
        x += 30                                   # eight frames of panning right
    records.append(
        TimestepRecord(
            game_id="demo", session_id="s0", frame_index=frame,
            timestamp_ms=frame * 62, mouse_x=x, mouse_y=400,
            keys=tuple(keys),
        )
    )

deltas = mouse_deltas(records, profile)
print("pointer deltas, frames 18..30:")
print(deltas[18:31, 0].tolist())

pan_flags = discretize_pan(deltas[:, 0], deltas[:, 1], profile.delta_threshold_px)
print("\npan-right raw flags, frames 18..30:", pan_flags[18:31, 1].tolist())

reload_raw = np.zeros(48, dtype=int)
reload_raw[10] = 1
reload_entry = catalog.lookup("Reload Gun")
propagated = propagate_labels(reload_raw, reload_entry.anim_delay, reload_entry.anim_length)
print(
    f"\nreload press at frame 10 propagates (delay {reload_entry.anim_delay}, "
    f"length {reload_entry.anim_length}) to frames "
    f"{np.flatnonzero(propagated).min()}..{np.flatnonzero(propagated).max()}"
)

samples = run_pipeline(records, profile, catalog)
print(f"\n{len(samples)} windows of 16 frames at stride 8:")
for s in samples:
    flags = [
        name
        for name, active in (
            ("panning", s.categories.panning),
            ("navigation", s.categories.navigation),
            ("weapon", s.categories.weapon),
        )
        if active
    ]
    print(f"  start {s.start_frame:>2}  [{', '.join(flags) or 'none'}]  \"{s.caption}\"")
