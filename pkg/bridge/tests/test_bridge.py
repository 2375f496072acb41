from __future__ import annotations

import hashlib
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from bhve_bridge.cli import main as bridge_main
from bhve_bridge.encoders import EncoderSpec, ToyTextEncoder, ToyVideoEncoder, spec_for
from bhve_bridge.errors import FrameSourceError, ManifestError, ModelLoadError
from bhve_bridge.export import (
    export_text_embeddings,
    export_video_embeddings,
    frame_file_for,
)
from bhve_bridge.formats import read_manifest_captions, write_bhve_table

MANIFEST_HEADER = "sample_id,actions,caption,panning,navigation,weapon"


def _write_manifest(path: Path, rows: list[tuple[str, str]]) -> Path:
    lines = [MANIFEST_HEADER]
    for sample_id, caption in rows:
        quoted = f'"{caption}"' if "," in caption else caption
        lines.append(f"{sample_id},0000000000000000,{quoted},0,0,0")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


SAMPLE_ROWS = [
    ("game00/s0/0", "Move Forward"),
    ("game00/s0/8", "Pan Left, Fire Gun"),
    ("game00/s0/16", "Idle"),
    ("game01/s0/0", "Move Forward"),
]


# ---------------------------------------------------------------- spec lookup


def test_spec_for_registry_dims():
    assert spec_for("text", "clip").dim == 512
    assert spec_for("text", "gpt2").dim == 768
    assert spec_for("text", "minilm").dim == 384
    assert spec_for("video", "videomae").dim == 768
    assert spec_for("text", "toy:96").dim == 96
    assert spec_for("video", "toy").dim == 512


def test_spec_for_unknown_model():
    with pytest.raises(ModelLoadError):
        spec_for("text", "oracle-9000")


def test_hub_model_load_failure_is_reported(monkeypatch):
    # no hub access in this environment, so construction must fail loudly
    monkeypatch.setenv("HF_HUB_OFFLINE", "1")
    monkeypatch.setenv("TRANSFORMERS_OFFLINE", "1")
    from bhve_bridge.encoders import build_encoder

    with pytest.raises(ModelLoadError):
        build_encoder(spec_for("text", "minilm"))


# ------------------------------------------------------------------- manifest


def test_read_manifest_captions(tmp_path):
    path = _write_manifest(tmp_path / "m.csv", SAMPLE_ROWS)
    assert read_manifest_captions(path) == SAMPLE_ROWS


def test_read_manifest_rejects_bad_header(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ManifestError):
        read_manifest_captions(path)


def test_read_manifest_missing_file(tmp_path):
    with pytest.raises(ManifestError):
        read_manifest_captions(tmp_path / "absent.csv")


# -------------------------------------------------------------------- exports


def test_text_export_rows_follow_manifest_order(tmp_path):
    manifest = _write_manifest(tmp_path / "m.csv", SAMPLE_ROWS)
    out = tmp_path / "captions.bhve"
    spec = spec_for("text", "toy:64")
    count = export_text_embeddings(manifest, out, spec, seed=1)
    assert count == 4
    ids = Path(str(out) + ".ids").read_text().splitlines()
    assert ids == [sample_id for sample_id, _ in SAMPLE_ROWS]


def test_text_export_identical_captions_share_rows(tmp_path):
    manifest = _write_manifest(tmp_path / "m.csv", SAMPLE_ROWS)
    out = tmp_path / "captions.bhve"
    export_text_embeddings(manifest, out, spec_for("text", "toy:64"), seed=1)
    payload = out.read_bytes()[16:]
    rows = np.frombuffer(payload, dtype="<f4").reshape(4, 64)
    assert np.array_equal(rows[0], rows[3])  # both "Move Forward"
    assert not np.array_equal(rows[0], rows[1])
    assert np.allclose(np.linalg.norm(rows, axis=1), 1.0, atol=1e-6)


def test_text_export_empty_manifest_header_only(tmp_path):
    manifest = _write_manifest(tmp_path / "m.csv", [])
    out = tmp_path / "captions.bhve"
    assert export_text_embeddings(manifest, out, spec_for("text", "toy:64")) == 0
    assert out.stat().st_size == 16
    assert Path(str(out) + ".ids").read_text() == ""


def test_text_export_deterministic(tmp_path):
    manifest = _write_manifest(tmp_path / "m.csv", SAMPLE_ROWS)
    a, b = tmp_path / "a.bhve", tmp_path / "b.bhve"
    export_text_embeddings(manifest, a, spec_for("text", "toy:64"), seed=5)
    export_text_embeddings(manifest, b, spec_for("text", "toy:64"), seed=5)
    assert a.read_bytes() == b.read_bytes()
    export_text_embeddings(manifest, b, spec_for("text", "toy:64"), seed=6)
    assert a.read_bytes() != b.read_bytes()


def _write_clips(tmp_path: Path, rows, *, frames=16, size=224) -> Path:
    frames_dir = tmp_path / "frames"
    frames_dir.mkdir(exist_ok=True)
    rng = np.random.default_rng(0)
    for sample_id, _ in rows:
        clip = rng.integers(0, 256, size=(frames, size, size, 3), dtype=np.uint8)
        np.save(frames_dir / frame_file_for(sample_id), clip)
    return frames_dir


def test_video_export_shapes_and_order(tmp_path):
    manifest = _write_manifest(tmp_path / "m.csv", SAMPLE_ROWS)
    frames_dir = _write_clips(tmp_path, SAMPLE_ROWS)
    out = tmp_path / "video.bhve"
    spec = spec_for("video", "toy:48")
    assert export_video_embeddings(manifest, frames_dir, out, spec, seed=2) == 4
    blob = out.read_bytes()
    import struct

    assert struct.unpack("<III", blob[4:16]) == (1, 4, 48)
    ids = Path(str(out) + ".ids").read_text().splitlines()
    assert ids == [sample_id for sample_id, _ in SAMPLE_ROWS]
    rows = np.frombuffer(blob[16:], dtype="<f4").reshape(4, 48)
    assert np.allclose(np.linalg.norm(rows, axis=1), 1.0, atol=1e-6)


def test_video_export_missing_stack(tmp_path):
    manifest = _write_manifest(tmp_path / "m.csv", SAMPLE_ROWS)
    frames_dir = _write_clips(tmp_path, SAMPLE_ROWS[:-1])
    with pytest.raises(FrameSourceError, match="game01/s0/0"):
        export_video_embeddings(
            manifest, frames_dir, tmp_path / "v.bhve", spec_for("video", "toy:16")
        )


def test_video_export_frame_count_mismatch(tmp_path):
    rows = SAMPLE_ROWS[:1]
    manifest = _write_manifest(tmp_path / "m.csv", rows)
    frames_dir = _write_clips(tmp_path, rows, frames=12)
    with pytest.raises(FrameSourceError, match="shape"):
        export_video_embeddings(
            manifest, frames_dir, tmp_path / "v.bhve", spec_for("video", "toy:16")
        )


def test_export_leaves_no_temp_files(tmp_path):
    manifest = _write_manifest(tmp_path / "m.csv", SAMPLE_ROWS)
    out = tmp_path / "captions.bhve"
    export_text_embeddings(manifest, out, spec_for("text", "toy:32"))
    leftovers = [p.name for p in tmp_path.iterdir() if p.name.endswith(".tmp")]
    assert leftovers == []


def test_toy_encoders_deterministic():
    spec_t = EncoderSpec(kind="text", model="toy:32", dim=32)
    a = ToyTextEncoder(spec_t, seed=3).encode(["Jump", "Idle"])
    b = ToyTextEncoder(spec_t, seed=3).encode(["Jump", "Idle"])
    assert np.array_equal(a, b)
    spec_v = EncoderSpec(kind="video", model="toy:24", dim=24)
    clip = np.zeros((1, 16, 224, 224, 3), dtype=np.uint8)
    assert np.array_equal(
        ToyVideoEncoder(spec_v, seed=3).encode(clip), ToyVideoEncoder(spec_v, seed=3).encode(clip)
    )


# --------------------------------------------------- primary-toolkit compliance


behalign = pytest.importorskip("behalign", reason="primary toolkit not installed")


def test_exported_table_passes_primary_validator(tmp_path):
    manifest = _write_manifest(tmp_path / "m.csv", SAMPLE_ROWS)
    out = tmp_path / "captions.bhve"
    export_text_embeddings(manifest, out, spec_for("text", "toy:64"), seed=0)
    table = behalign.read_table(out)  # raises on any format violation
    assert table.ids == tuple(sample_id for sample_id, _ in SAMPLE_ROWS)
    assert table.dim == 64
    # and the primary's own writer reproduces the bytes (shared wire format)
    behalign.write_table(table, tmp_path / "roundtrip.bhve")
    assert (tmp_path / "roundtrip.bhve").read_bytes() == out.read_bytes()


def test_video_export_passes_primary_validator(tmp_path):
    manifest = _write_manifest(tmp_path / "m.csv", SAMPLE_ROWS[:2])
    frames_dir = _write_clips(tmp_path, SAMPLE_ROWS[:2])
    out = tmp_path / "video.bhve"
    export_video_embeddings(manifest, frames_dir, out, spec_for("video", "toy:40"), seed=0)
    table = behalign.read_table(out)
    assert table.dim == 40 and len(table) == 2


def _run(cmd: list[str]) -> subprocess.CompletedProcess:
    return subprocess.run(cmd, capture_output=True, text=True)


def test_mixed_run_trains_through_primary_cli(tmp_path):
    """Bridge text table + synthetic video table feed the primary trainer."""
    data = tmp_path / "data"
    proc = _run([
        sys.executable, "-m", "behalign.cli", "synth", "--out-dir", str(data),
        "--games", "2", "--frames", "384", "--dim", "16", "--seed", "8",
    ])
    assert proc.returncode == 0, proc.stderr
    text_table = tmp_path / "captions.bhve"
    assert bridge_main([
        "export-text", "--manifest", str(data / "manifest.csv"),
        "--model", "toy:512", "--out", str(text_table),
    ]) == 0
    ckpt = tmp_path / "model.ckpt"
    proc = _run([
        sys.executable, "-m", "behalign.cli", "train",
        "--video-table", str(data / "video.bhve"), "--text-table", str(text_table),
        "--out-checkpoint", str(ckpt), "--epochs", "1", "--hidden", "16", "--seed", "0",
    ])
    assert proc.returncode == 0, proc.stderr
    assert ckpt.exists()
    proc = _run([
        sys.executable, "-m", "behalign.cli", "project", "--checkpoint", str(ckpt),
        "--table", str(data / "video.bhve"), "--out", str(tmp_path / "aligned.bhve"),
    ])
    assert proc.returncode == 0, proc.stderr
    assert behalign.read_table(tmp_path / "aligned.bhve").dim == 512


def test_bridge_cli_text_round_trip(tmp_path):
    manifest = _write_manifest(tmp_path / "m.csv", SAMPLE_ROWS)
    out_a, out_b = tmp_path / "a.bhve", tmp_path / "b.bhve"
    for out in (out_a, out_b):
        assert bridge_main([
            "export-text", "--manifest", str(manifest), "--model", "toy:48",
            "--out", str(out), "--seed", "4",
        ]) == 0
    digest = lambda p: hashlib.sha256(p.read_bytes()).hexdigest()  # noqa: E731
    assert digest(out_a) == digest(out_b)


def test_bridge_cli_reports_errors(tmp_path, capsys):
    code = bridge_main([
        "export-text", "--manifest", str(tmp_path / "absent.csv"),
        "--model", "toy:16", "--out", str(tmp_path / "x.bhve"),
    ])
    assert code == 1
    assert "ManifestError" in capsys.readouterr().err
