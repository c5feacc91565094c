"""HTTP labeling API consumed by the review UI.

    GET  /api/queue/next[?skip=a,b]  -> 200 queue item | 204 queue empty
    GET  /api/audio/{clip_id}        -> 200 audio/wav bytes | 404
    POST /api/labels {clip_id,label} -> 200 submit result | 400 | 404
    GET  /api/stats                  -> 200 label counts

Static assets (the built UI) are served from an optional directory at /.
Mutations are serialized by the LabelingSession; reads see a consistent
snapshot. Binds to loopback by default; there is no authentication.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, unquote, urlparse

from .errors import LabelingError, UnknownClipError, UnknownLabelError
from .labeling import LabelingSession

log = logging.getLogger(__name__)


class LabelingServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address: tuple[str, int], session: LabelingSession, static_dir: str | Path | None = None):
        super().__init__(address, _Handler)
        self.session = session
        self.static_dir = Path(static_dir) if static_dir else None

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def serve_in_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


class _Handler(BaseHTTPRequestHandler):
    server: LabelingServer

    def log_message(self, fmt: str, *args) -> None:
        log.debug("%s - %s", self.address_string(), fmt % args)

    def _send(self, status: int, body: bytes = b"", content_type: str = "application/json") -> None:
        self.send_response(status)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        if body:
            self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if body:
            self.wfile.write(body)

    def _send_json(self, status: int, payload: dict) -> None:
        self._send(status, json.dumps(payload).encode("utf-8"))

    def do_OPTIONS(self) -> None:  # noqa: N802 - http.server naming
        self._send(204)

    def do_GET(self) -> None:  # noqa: N802
        parsed = urlparse(self.path)
        path = unquote(parsed.path)
        if path == "/api/queue/next":
            query = parse_qs(parsed.query)
            skip = [cid for raw in query.get("skip", []) for cid in raw.split(",") if cid]
            item = self.server.session.next_queued(skip=skip)
            if item is None:
                self._send(204)
                return
            self._send_json(
                200,
                {
                    "clip_id": item.clip_id,
                    "transcript": item.transcript,
                    "audio_url": item.audio_url,
                    "queued_remaining": item.queued_remaining,
                },
            )
        elif path.startswith("/api/audio/"):
            self._serve_audio(path[len("/api/audio/") :])
        elif path == "/api/stats":
            self._send_json(200, self.server.session.stats())
        else:
            self._serve_static(path)

    def _serve_audio(self, clip_id: str) -> None:
        record = self.server.session.archive.get(clip_id)
        audio_path = self.server.session.archive.audio_path(record) if record else None
        if audio_path is None or not audio_path.exists():
            self._send_json(404, {"error": f"no audio for clip {clip_id!r}"})
            return
        self._send(200, audio_path.read_bytes(), content_type="audio/wav")

    def _serve_static(self, path: str) -> None:
        root = self.server.static_dir
        if root is None:
            self._send_json(404, {"error": "not found"})
            return
        relative = path.lstrip("/") or "index.html"
        target = (root / relative).resolve()
        if not str(target).startswith(str(root.resolve())) or not target.is_file():
            self._send_json(404, {"error": "not found"})
            return
        content_type = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        self._send(200, target.read_bytes(), content_type=content_type)

    def do_POST(self) -> None:  # noqa: N802
        if urlparse(self.path).path != "/api/labels":
            self._send_json(404, {"error": "not found"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            payload = json.loads(self.rfile.read(length) or b"{}")
            clip_id = payload["clip_id"]
            label = payload["label"]
        except (ValueError, KeyError, json.JSONDecodeError):
            self._send_json(400, {"error": "body must be JSON with clip_id and label"})
            return
        try:
            result = self.server.session.submit_label(clip_id, label)
        except UnknownClipError as exc:
            self._send_json(404, {"error": str(exc)})
            return
        except (UnknownLabelError, LabelingError) as exc:
            self._send_json(400, {"error": str(exc)})
            return
        self._send_json(
            200,
            {"accepted": result.accepted, "auto_propagated": result.auto_propagated, "remaining": result.remaining},
        )


def serve_labeling(
    session: LabelingSession,
    host: str = "127.0.0.1",
    port: int = 8723,
    static_dir: str | Path | None = None,
) -> LabelingServer:
    server = LabelingServer((host, port), session, static_dir=static_dir)
    log.info("labeling API listening on %s", server.url)
    return server
