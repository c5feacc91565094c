"""Shared fixtures: a bundled-style fixture archive, a mock activity
server for scrape tests, and the synthetic two-speaker corpus used by
the end-to-end acceptance checks."""

from __future__ import annotations

import json
import threading
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import numpy as np
import pytest
from hypothesis import settings

from escape.archive import Archive
from escape.audio import AudioClip, write_wav
from escape.dsp import compute_mfcc, truncate
from escape.hmm import similarity_matrix

from synthvoices import synth_corpus

settings.register_profile("suite", max_examples=30, deadline=None)
settings.load_profile("suite")

_ACCEPTANCE_RESULTS: list[tuple[str, bool]] = []


@pytest.fixture
def acceptance():
    """Context manager that records one pass/fail line per criterion."""

    @contextmanager
    def wrap(name: str):
        try:
            yield
        except BaseException:
            _ACCEPTANCE_RESULTS.append((name, False))
            raise
        _ACCEPTANCE_RESULTS.append((name, True))

    return wrap


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed in _ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}")


def make_tone(clip_id: str, freq: float = 440.0, duration: float = 0.5, amplitude: float = 0.5) -> AudioClip:
    t = np.arange(int(duration * 16000)) / 16000
    return AudioClip(id=clip_id, sample_rate=16000, samples=amplitude * np.sin(2 * np.pi * freq * t))


# 10 records: 7 SUCCESS / 3 FAULT, 6 on device A / 4 on device B, 8 with audio.
FIXTURE_ROWS = [
    # (id, status, device, transcript, has_audio)
    ("r001", "SUCCESS", "A", "set timer for five minutes", True),
    ("r002", "SUCCESS", "A", "play the smiths", True),
    ("r003", "FAULT", "A", "alexa", True),
    ("r004", "SUCCESS", "B", "how much does a tablespoon of sugar weigh", True),
    ("r005", "SUCCESS", "A", "what's the weather like today", True),
    ("r006", "FAULT", "B", None, True),
    ("r007", "SUCCESS", "A", "add milk to the shopping list", True),
    ("r008", "SUCCESS", "B", "volume eight", True),
    ("r009", "FAULT", "A", None, False),
    ("r010", "SUCCESS", "B", "what's the football score", False),
]
FIXTURE_DEVICES = {"A": ("Kitchen Dot", "SER-A"), "B": ("Living Room Echo", "SER-B")}


def build_fixture_archive(root: Path) -> Archive:
    archive = Archive.create(root)
    for i, (rid, status, device, transcript, has_audio) in enumerate(FIXTURE_ROWS):
        name, serial = FIXTURE_DEVICES[device]
        audio_file = None
        if has_audio:
            write_wav(root / "audio" / f"{rid}.wav", make_tone(rid, freq=300 + 40 * i))
            audio_file = f"audio/{rid}.wav"
        archive.append_record(
            _record(rid, f"2024-03-01T10:{i:02d}:00+00:00", serial, name, status, transcript, audio_file)
        )
    return archive


def _record(rid, ts, serial, name, status, transcript, audio_file):
    from escape.archive import InteractionRecord

    return InteractionRecord(
        id=rid,
        timestamp_utc=ts,
        device_serial=serial,
        device_name=name,
        status=status,
        transcript=transcript,
        audio_file=audio_file,
    )


@pytest.fixture
def fixture_archive(tmp_path: Path) -> Archive:
    return build_fixture_archive(tmp_path / "archive")


def make_wav_bytes(clip_id: str, freq: float = 440.0) -> bytes:
    import io
    import wave

    clip = make_tone(clip_id, freq=freq, duration=0.2)
    ints = np.clip(np.rint(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    buf = io.BytesIO()
    with wave.open(buf, "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(16000)
        wav.writeframes(ints.tobytes())
    return buf.getvalue()


class MockActivityServer:
    """Stand-in for the activity listing + audio endpoints.

    Modes: require a cookie (401 otherwise), optionally fail the first k
    requests with HTTP 500 to exercise the retry path.
    """

    def __init__(self, activities: list[dict], audio: dict[str, bytes], cookie: str = "session=ok"):
        self.activities = activities
        self.audio = audio
        self.cookie = cookie
        self.fail_next = 0
        self.force_status: int | None = None
        self.request_count = 0
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, fmt, *args):
                pass

            def do_GET(self):
                outer.request_count += 1
                if outer.force_status is not None:
                    self.send_response(outer.force_status)
                    self.end_headers()
                    return
                if outer.fail_next > 0:
                    outer.fail_next -= 1
                    self.send_response(500)
                    self.end_headers()
                    return
                if self.headers.get("Cookie") != outer.cookie:
                    self.send_response(401)
                    self.end_headers()
                    return
                parsed = urlparse(self.path)
                if parsed.path == "/api/activities":
                    query = parse_qs(parsed.query)
                    offset = int(query.get("offset", ["0"])[0])
                    size = int(query.get("size", ["50"])[0])
                    body = json.dumps({"activities": outer.activities[offset : offset + size]}).encode()
                    self.send_response(200)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)
                elif parsed.path.startswith("/api/audio/"):
                    clip_id = parsed.path[len("/api/audio/") :]
                    body = outer.audio.get(clip_id)
                    if body is None:
                        self.send_response(404)
                        self.end_headers()
                        return
                    self.send_response(200)
                    self.send_header("Content-Type", "audio/wav")
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)
                else:
                    self.send_response(404)
                    self.end_headers()

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self.server.server_address[1]}"

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def mock_server():
    activities = [
        {
            "id": f"act{i}",
            "timestamp_utc": f"2024-02-0{i + 1}T09:00:00+00:00",
            "device_serial": "SER-A",
            "device_name": "Kitchen Dot",
            "status": "SUCCESS",
            "transcript": f"utterance {i}",
            "has_audio": True,
        }
        for i in range(3)
    ]
    audio = {f"act{i}": make_wav_bytes(f"act{i}", freq=200.0 + 100 * i) for i in range(3)}
    server = MockActivityServer(activities, audio)
    yield server
    server.close()


# --- synthetic two-speaker corpus, shared by the expensive end-to-end tests ---

ACCEPTANCE_N_CLIPS = 185
ACCEPTANCE_SEED = 2024


@pytest.fixture(scope="session")
def synth_similarity():
    """MFCCs and the full similarity matrix for the 185-clip synthetic corpus.

    Returns (similarity, truth labels, seconds spent on features + models)
    so the end-to-end criterion can include feature time in its runtime
    budget.
    """
    import time

    start = time.perf_counter()
    clips, truth = synth_corpus(ACCEPTANCE_N_CLIPS, seed=ACCEPTANCE_SEED)
    mfccs = [compute_mfcc(truncate(clip)) for clip in clips]
    sim = similarity_matrix(mfccs, seed=ACCEPTANCE_SEED, jobs=4)
    return sim, truth, time.perf_counter() - start
