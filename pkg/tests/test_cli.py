"""End-to-end CLI behavior on a temporary archive."""

from __future__ import annotations

import json
import wave
from pathlib import Path

import numpy as np
import pytest

from escape.cli import main

from conftest import build_fixture_archive, make_tone
from escape.audio import write_wav
from escape.archive import Archive, open_archive


@pytest.fixture
def archive_dir(tmp_path) -> Path:
    return build_fixture_archive(tmp_path / "arch").root


def run(args: list[str]) -> int:
    return main([str(a) for a in args])


def test_features_extracts_all_clips(archive_dir, capsys):
    assert run(["features", "--archive", archive_dir]) == 0
    out = capsys.readouterr().out
    assert "8 clip(s)" in out
    assert (archive_dir / "features.npz").exists()
    assert (archive_dir / "features.npz.meta.json").exists()


def test_features_partial_failure_names_clip(archive_dir, capsys):
    # Corrupt one WAV: still exit 0, name the clip; --strict flips to 1.
    bad = archive_dir / "audio" / "r003.wav"
    bad.write_bytes(b"RIFF broken")
    assert run(["features", "--archive", archive_dir]) == 0
    captured = capsys.readouterr()
    assert "7 clip(s)" in captured.out
    assert "r003" in captured.err
    assert run(["features", "--archive", archive_dir, "--strict"]) == 1


def test_features_rejects_wrong_sample_rate(archive_dir, capsys):
    clip = make_tone("r001")
    clip.sample_rate = 8000
    write_wav(archive_dir / "audio" / "r001.wav", clip)
    assert run(["features", "--archive", archive_dir]) == 0
    assert "r001" in capsys.readouterr().err


def test_label_propagate_and_report_flow(archive_dir, capsys):
    assert run(["features", "--archive", archive_dir]) == 0
    # Bootstrap: no manual labels yet.
    assert run(["label", "--archive", archive_dir, "--propagate-only"]) == 1
    assert "bootstrap" in capsys.readouterr().err
    # Seed two manual labels, then propagate headlessly.
    from escape.labeling import LabelStore

    store = LabelStore(archive_dir / "labels.jsonl")
    store.set_manual("r001", "Male")
    store.set_manual("r002", "Female")
    assert run(["label", "--archive", archive_dir, "--propagate-only"]) == 0
    assert "queued" in capsys.readouterr().out


def test_report_table_and_csv(archive_dir, capsys, tmp_path):
    assert run(["report", "--archive", archive_dir]) == 0
    table = capsys.readouterr().out
    assert "SUCCESS" in table and "Kitchen Dot" in table

    out_dir = tmp_path / "report"
    assert run(["report", "--archive", archive_dir, "--format", "csv", "--out-dir", out_dir]) == 0
    csv_out = capsys.readouterr().out
    assert "# section: status" in csv_out
    assert "SUCCESS,7" in csv_out
    for name in ("status.csv", "device.csv", "intent.csv", "status.png", "device.png", "intent.png", "metadata.json"):
        assert (out_dir / name).exists(), name


def test_report_with_speaker_filter(archive_dir, capsys):
    from escape.labeling import LabelStore

    store = LabelStore(archive_dir / "labels.jsonl")
    store.set_manual("r001", "Male")
    assert run(["report", "--archive", archive_dir, "--speaker", "Male", "--format", "csv"]) == 0
    out = capsys.readouterr().out
    assert "Timer,1" in out
    assert run(["report", "--archive", archive_dir, "--speaker", "Robot"]) == 1


def test_validate_flags_missing_audio(archive_dir, capsys):
    assert run(["validate", "--archive", archive_dir]) == 0
    (archive_dir / "audio" / "r002.wav").unlink()
    assert run(["validate", "--archive", archive_dir]) == 1
    assert "r002" in capsys.readouterr().err


def test_validate_reports_wrong_rate_as_warning(archive_dir, capsys):
    path = archive_dir / "audio" / "r001.wav"
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(22050)
        wav.writeframes(np.zeros(1000, dtype="<i2").tobytes())
    assert run(["validate", "--archive", archive_dir]) == 0
    assert "sample rate" in capsys.readouterr().err


def test_evaluate_and_classify_pipeline(tmp_path, capsys):
    # Two synthetic speakers, 12 clips, most labeled; classify the rest.
    from synthvoices import HIGH_VOICE, LOW_VOICE, synth_clip

    rng = np.random.default_rng(5)
    archive = Archive.create(tmp_path / "arch")
    truth = {}
    for i in range(12):
        profile = LOW_VOICE if i % 2 == 0 else HIGH_VOICE
        cid = f"c{i:02d}"
        truth[cid] = profile.name
        write_wav(archive.root / "audio" / f"{cid}.wav", synth_clip(profile, cid, rng, duration=0.8))
        from escape.archive import InteractionRecord

        archive.append_record(
            InteractionRecord(
                id=cid,
                timestamp_utc=f"2024-04-01T10:{i:02d}:00+00:00",
                device_serial="S",
                device_name="D",
                status="SUCCESS",
                transcript="hello",
                audio_file=f"audio/{cid}.wav",
            )
        )
    from escape.labeling import LabelStore

    store = LabelStore(archive.root / "labels.jsonl")
    for cid in list(truth)[:10]:
        store.set_manual(cid, truth[cid])

    assert run(["features", "--archive", archive.root]) == 0
    out_dir = tmp_path / "eval"
    args = [
        "evaluate",
        "--archive",
        archive.root,
        "--splits",
        "8",
        "--seed",
        "7",
        "--out-dir",
        out_dir,
        "--no-figures",
    ]
    assert run(args) == 0
    first = (out_dir / "evaluation.csv").read_bytes()
    assert (out_dir / "pca.csv").exists()
    assert (out_dir / "metadata.json").exists()

    # Determinism: identical config -> byte-identical report.
    assert run(args) == 0
    assert (out_dir / "evaluation.csv").read_bytes() == first

    classify_dir = tmp_path / "cls"
    assert run(["classify", "--archive", archive.root, "--seed", "7", "--out-dir", classify_dir]) == 0
    lines = [json.loads(line) for line in (classify_dir / "classified.jsonl").read_text().splitlines()]
    assert {line["clip_id"] for line in lines} == {"c10", "c11"}
    assert all(line["source"] == "classified" for line in lines)
    predicted = {line["clip_id"]: line["label"] for line in lines}
    assert predicted == {cid: truth[cid] for cid in predicted}

    # Archive untouched by evaluate/classify except caches; labels applied via label.
    labels_before = (archive.root / "labels.jsonl").read_text()
    assert run(["label", "--archive", archive.root, "--apply-classified", classify_dir / "classified.jsonl"]) == 0
    labels_after = (archive.root / "labels.jsonl").read_text()
    assert len(labels_after.splitlines()) == len(labels_before.splitlines()) + 2
    reopened = open_archive(archive.root)
    assert len(reopened.records) == 12


def test_scrape_cli_against_mock(tmp_path, mock_server, monkeypatch, capsys):
    monkeypatch.setenv("ESCAPE_COOKIE", mock_server.cookie)
    archive_dir = tmp_path / "scraped"
    args = ["scrape", "--archive", archive_dir, "--base-url", mock_server.base_url, "--page-size", "2"]
    assert run(args) == 0
    assert "3 new record(s)" in capsys.readouterr().out
    assert (archive_dir / "scrape.meta.json").exists()
    sidecar = json.loads((archive_dir / "scrape.meta.json").read_text())
    assert sidecar["config"]["cookie"] == "<redacted>"
    # Second run ingests nothing.
    assert run(args) == 0
    assert "0 new record(s)" in capsys.readouterr().out


def test_unknown_archive_errors(tmp_path, capsys):
    assert run(["report", "--archive", tmp_path / "missing"]) == 1
    assert "error:" in capsys.readouterr().err


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        run(["--version"])
    assert exc.value.code == 0
