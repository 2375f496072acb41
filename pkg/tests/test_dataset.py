from __future__ import annotations

import io

import numpy as np
import pytest

from behalign.dataset import (
    Category,
    Device,
    GameProfile,
    MouseMode,
    detect_discontinuities,
    load_profiles,
    parse_log,
    save_profiles,
    serialize_log,
)
from behalign.errors import (
    MalformedRowError,
    NonMonotonicFrameError,
    UnknownActionError,
)

from .conftest import log_text, make_records


# ------------------------------------------------------------------- catalog


def test_default_catalog_collapses_nineteen_raw_inputs_to_sixteen_labels(catalog):
    assert catalog.size == 16
    assert catalog.raw_entry_count == 19
    assert catalog.lookup("crouch").keys == ("lctrl", "c")
    assert catalog.lookup("change_gun").keys == ("1", "2", "3")


def test_default_catalog_category_partition(catalog):
    sizes = {c: len(catalog.category_positions(c)) for c in Category}
    assert sizes == {
        Category.PANNING: 4,
        Category.NAVIGATION: 7,
        Category.WEAPON: 4,
        Category.NONE: 1,
    }
    assert [e.action_id for e in catalog.entries if e.category is Category.NONE] == ["interact"]


def test_default_catalog_animation_parameters(catalog):
    assert catalog.lookup("Reload Gun").anim_delay == 3
    assert catalog.lookup("Reload Gun").anim_length == 16
    assert catalog.lookup("Reload Gun").cutoff == 6
    assert catalog.lookup("Sprint").cutoff == 6
    assert catalog.lookup("Jump").category is Category.NAVIGATION
    assert catalog.lookup("Change Gun").anim_delay == 3
    assert catalog.lookup("Change Gun").anim_length == 8
    assert catalog.lookup("Change Gun").cutoff == 6
    assert catalog.lookup("Interact").anim_delay == 3
    assert catalog.lookup("Interact").anim_length == 5
    assert catalog.lookup("Interact").cutoff == 3
    for name in ("Pan Left", "Pan Right", "Pan Up", "Pan Down", "Fire Gun", "Aim Gun",
                 "Move Forward", "Strafe Left", "Move Backward", "Strafe Right", "Jump"):
        entry = catalog.lookup(name)
        assert (entry.anim_delay, entry.anim_length, entry.cutoff) == (1, 2, 2)


def test_catalog_order_puts_mouse_before_keyboard(catalog):
    devices = [e.device for e in catalog.entries]
    first_key = devices.index(Device.KEY)
    assert all(d is Device.KEY for d in devices[first_key:])
    assert [e.action_id for e in catalog.entries[:6]] == [
        "pan_left", "pan_right", "pan_up", "pan_down", "fire", "aim",
    ]


def test_catalog_phrases_unique_and_nonempty(catalog):
    phrases = [e.phrase for e in catalog.entries]
    assert all(phrases)
    assert len(set(phrases)) == len(phrases)


def test_catalog_overrides_replace_animation_fields(catalog):
    patched = catalog.with_overrides({"reload": {"anim_length": 12, "cutoff": 4}})
    assert patched.lookup("reload").anim_length == 12
    assert patched.lookup("reload").cutoff == 4
    assert catalog.lookup("reload").anim_length == 16  # original untouched
    with pytest.raises(UnknownActionError):
        catalog.with_overrides({"warp": {"cutoff": 1}})
    with pytest.raises(ValueError):
        catalog.with_overrides({"reload": {"phrase": 1}})


# ----------------------------------------------------------------- parse_log


def _header(catalog, action_names=None):
    names = action_names or [e.action_id for e in catalog.keyed_entries]
    return ["game", "session", "frame", "ts_ms", "mouse_x", "mouse_y"] + names


def test_parse_log_empty_file_with_header(catalog):
    assert parse_log(log_text(_header(catalog), []), catalog) == []


def test_parse_log_missing_header_is_malformed(catalog):
    with pytest.raises(MalformedRowError):
        parse_log(io.StringIO(""), catalog)


def test_parse_log_wrong_cell_count(catalog):
    rows = [["g", "s", 0, 0, 1, 1, 0, 1]]  # far fewer action cells than header
    with pytest.raises(MalformedRowError):
        parse_log(log_text(_header(catalog), rows), catalog)


def test_parse_log_unknown_action_in_header(catalog):
    with pytest.raises(UnknownActionError):
        parse_log(log_text(_header(catalog, ["teleport"]), [["g", "s", 0, 0, 1, 1, 0]]), catalog)


def test_parse_log_rejects_non_binary_cells(catalog):
    row = ["g", "s", 0, 0, 1, 1] + ["2"] + ["0"] * 11
    with pytest.raises(MalformedRowError):
        parse_log(log_text(_header(catalog), [row]), catalog)


def test_parse_log_rejects_non_monotonic_frames(catalog):
    rows = [
        ["g", "s", 1, 62, 1, 1] + ["0"] * 12,
        ["g", "s", 1, 124, 1, 1] + ["0"] * 12,
    ]
    with pytest.raises(NonMonotonicFrameError):
        parse_log(log_text(_header(catalog), rows), catalog)


def test_parse_log_three_row_hand_fixture(catalog):
    rows = [
        ["pubg", "s1", 0, 0, 960, 540] + [1] + [0] * 11,
        ["pubg", "s1", 1, 62, 980, 540] + [0] * 12,
        ["pubg", "s1", 2, 125, 990, 545] + [0, 0, 1] + [0] * 9,
    ]
    records = parse_log(log_text(_header(catalog), rows), catalog)
    assert len(records) == 3
    assert records[0].keys[0] == 1  # fire
    assert records[2].keys[2] == 1  # forward
    assert (records[1].mouse_x, records[1].mouse_y) == (980, 540)
    assert records[2].timestamp_ms == 125


def test_parse_log_merges_raw_key_aliases(catalog):
    header = _header(catalog, ["lctrl", "c", "1", "3", "w"])
    rows = [["g", "s", 0, 0, 1, 1, 1, 0, 0, 1, 1]]
    (record,) = parse_log(log_text(header, rows), catalog)
    assert record.keys[catalog.keyed_position("crouch")] == 1
    assert record.keys[catalog.keyed_position("change_gun")] == 1
    assert record.keys[catalog.keyed_position("forward")] == 1
    assert record.keys[catalog.keyed_position("fire")] == 0


def test_serialize_then_parse_is_identity(catalog):
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(1, 30))
        presses = {
            "fire": rng.integers(0, n, size=rng.integers(0, n)).tolist(),
            "forward": rng.integers(0, n, size=rng.integers(0, n)).tolist(),
        }
        mouse = [(int(rng.integers(0, 1920)), int(rng.integers(0, 1080))) for _ in range(n)]
        records = make_records(catalog, n, presses=presses, mouse=mouse)
        buf = io.StringIO()
        serialize_log(records, catalog, buf)
        buf.seek(0)
        assert parse_log(buf, catalog) == records


# ------------------------------------------------------- detect_discontinuities


def test_discontinuities_hand_fixture(catalog):
    records = make_records(catalog, 5)
    stamps = [0, 62, 125, 5000, 5062]
    records = [
        r.__class__(**{**r.__dict__, "timestamp_ms": t}) for r, t in zip(records, stamps)
    ]
    assert detect_discontinuities(records, max_gap_ms=500) == [(0, 3), (3, 5)]


def test_discontinuities_uniform_spacing_single_segment(catalog):
    assert detect_discontinuities(make_records(catalog, 40), 500) == [(0, 40)]


def test_discontinuities_single_record(catalog):
    assert detect_discontinuities(make_records(catalog, 1), 500) == [(0, 1)]


def test_discontinuities_empty(catalog):
    assert detect_discontinuities([], 500) == []


def test_discontinuities_split_on_frame_jump(catalog):
    first = make_records(catalog, 3)
    second = make_records(catalog, 2, start_frame=10)
    assert detect_discontinuities(first + second, 10_000) == [(0, 3), (3, 5)]


def test_discontinuities_split_on_session_change(catalog):
    a = make_records(catalog, 2, session="s0")
    b = make_records(catalog, 2, session="s1")
    assert detect_discontinuities(a + b, 10_000) == [(0, 2), (2, 4)]


def test_discontinuities_cover_disjoint_ordered(catalog):
    rng = np.random.default_rng(9)
    records = make_records(catalog, 60)
    stamps = np.cumsum(rng.choice([62, 63, 900], size=60)).tolist()
    records = [
        r.__class__(**{**r.__dict__, "timestamp_ms": int(t)}) for r, t in zip(records, stamps)
    ]
    segments = detect_discontinuities(records, 500)
    assert segments[0][0] == 0 and segments[-1][1] == len(records)
    for (a0, a1), (b0, b1) in zip(segments, segments[1:]):
        assert a1 == b0 and a0 < a1


# ------------------------------------------------------------------ profiles


def test_profiles_round_trip(tmp_path):
    profiles = {
        "pubg": GameProfile("pubg", MouseMode.FREE_FORM, 20),
        "cod": GameProfile(
            "cod", MouseMode.AUTO_CENTER, 2, action_overrides={"reload": {"anim_length": 12}}
        ),
    }
    path = tmp_path / "profiles.json"
    save_profiles(profiles, path)
    loaded, overrides = load_profiles(path)
    assert loaded == profiles
    assert overrides == {}


def test_profiles_global_catalog_overrides(tmp_path):
    path = tmp_path / "p.json"
    path.write_text(
        '{"games": {"g": {"mouse_mode": "free_form"}}, "actions": {"sprint": {"cutoff": 4}}}'
    )
    profiles, overrides = load_profiles(path)
    assert profiles["g"].delta_threshold_px == 20
    assert overrides == {"sprint": {"cutoff": 4}}


def test_profile_validation():
    with pytest.raises(ValueError):
        GameProfile("g", MouseMode.FREE_FORM, delta_threshold_px=0)
    with pytest.raises(ValueError):
        GameProfile("bad/name", MouseMode.FREE_FORM)
    with pytest.raises(ValueError):
        GameProfile("g", MouseMode.AUTO_CENTER, center_epsilon_px=600)
