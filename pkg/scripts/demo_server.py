#!/usr/bin/env python3
"""Tiny stand-in activity server for demos and end-to-end drives.

Serves N synthetic two-speaker activities plus their WAV audio on
127.0.0.1, using the same payload schema the scraper expects. Prints the
base URL and the cookie it requires, then blocks.

Usage: python3 scripts/demo_server.py [n_clips] [port]
"""

from __future__ import annotations

import io
import json
import sys
import wave
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import numpy as np

sys.path.insert(0, "tests")
from synthvoices import HIGH_VOICE, LOW_VOICE, synth_clip  # noqa: E402

COOKIE = "session=demo"


def wav_bytes(samples: np.ndarray, sample_rate: int) -> bytes:
    ints = np.clip(np.rint(samples * 32768.0), -32768, 32767).astype("<i2")
    buf = io.BytesIO()
    with wave.open(buf, "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(sample_rate)
        wav.writeframes(ints.tobytes())
    return buf.getvalue()


def build_corpus(n_clips: int):
    rng = np.random.default_rng(7)
    transcripts = [
        "set timer for five minutes",
        "play the smiths",
        "what's the weather like today",
        "volume eight",
        "add milk to the shopping list",
        "alexa",
        None,
        "what's the football score",
        "how much does a tablespoon of sugar weigh",
        "what's on my calendar tomorrow",
    ]
    activities, audio = [], {}
    for i in range(n_clips):
        profile = LOW_VOICE if i % 2 == 0 else HIGH_VOICE
        clip_id = f"demo{i:04d}"
        clip = synth_clip(profile, clip_id, rng)
        audio[clip_id] = wav_bytes(clip.samples, clip.sample_rate)
        activity = {
            "id": clip_id,
            "timestamp_utc": f"2024-05-{i % 28 + 1:02d}T{8 + i % 12:02d}:{i % 60:02d}:00+00:00",
            "device_serial": "SER-A" if i % 3 else "SER-B",
            "device_name": "Kitchen Dot" if i % 3 else "Living Room Echo",
            "status": "SUCCESS" if i % 7 else "FAULT",
            "has_audio": True,
        }
        transcript = transcripts[i % len(transcripts)]
        if transcript is not None:
            activity["transcript"] = transcript
        activities.append(activity)
    return activities, audio


def main() -> None:
    n_clips = int(sys.argv[1]) if len(sys.argv) > 1 else 24
    port = int(sys.argv[2]) if len(sys.argv) > 2 else 8899
    activities, audio = build_corpus(n_clips)

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):
            pass

        def do_GET(self):
            if self.headers.get("Cookie") != COOKIE:
                self.send_response(401)
                self.end_headers()
                return
            parsed = urlparse(self.path)
            if parsed.path == "/api/activities":
                query = parse_qs(parsed.query)
                offset = int(query.get("offset", ["0"])[0])
                size = int(query.get("size", ["50"])[0])
                body = json.dumps({"activities": activities[offset : offset + size]}).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)
            elif parsed.path.startswith("/api/audio/"):
                body = audio.get(parsed.path.rsplit("/", 1)[1])
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

    server = ThreadingHTTPServer(("127.0.0.1", port), Handler)
    print(f"serving {n_clips} activities at http://127.0.0.1:{port} (cookie: {COOKIE})", flush=True)
    server.serve_forever()


if __name__ == "__main__":
    main()
