"""Labeling HTTP API driven through a real socket."""

from __future__ import annotations

import json

import pytest
import requests

from escape.labeling import LabelStore, LabelingSession
from escape.server import serve_labeling

from conftest import build_fixture_archive
from test_labeling import signature_at_divergence


@pytest.fixture
def server(tmp_path):
    archive = build_fixture_archive(tmp_path / "arch")
    ids = [r.id for r in archive.records_with_audio()]
    # r001's three near-duplicates plus four far clips.
    signatures = {}
    for i, cid in enumerate(ids):
        divergence = float(i) if i < 4 else 1000.0 * i
        signatures[cid] = signature_at_divergence(divergence, cid)
    store = LabelStore(archive.labels_path)
    session = LabelingSession(archive, signatures, store)
    srv = serve_labeling(session, host="127.0.0.1", port=0)
    srv.serve_in_background()
    yield srv
    srv.shutdown()
    srv.server_close()


def test_queue_next_returns_head(server):
    response = requests.get(f"{server.url}/api/queue/next", timeout=5)
    assert response.status_code == 200
    body = response.json()
    assert body["clip_id"] == "r001"
    assert body["queued_remaining"] == 8
    assert body["audio_url"] == "/api/audio/r001"
    assert body["transcript"] == "set timer for five minutes"


def test_queue_next_honors_skip(server):
    response = requests.get(f"{server.url}/api/queue/next", params={"skip": "r001,r002"}, timeout=5)
    assert response.json()["clip_id"] == "r003"


def test_audio_roundtrip(server):
    response = requests.get(f"{server.url}/api/audio/r001", timeout=5)
    assert response.status_code == 200
    assert response.headers["Content-Type"] == "audio/wav"
    expected = (server.session.archive.root / "audio" / "r001.wav").read_bytes()
    assert response.content == expected


def test_audio_unknown_clip_404(server):
    assert requests.get(f"{server.url}/api/audio/nope", timeout=5).status_code == 404


def test_label_submit_flow(server):
    response = requests.post(f"{server.url}/api/labels", json={"clip_id": "r001", "label": "Male"}, timeout=5)
    assert response.status_code == 200
    body = response.json()
    assert body["accepted"] is True
    assert body["auto_propagated"] >= 3
    stats = requests.get(f"{server.url}/api/stats", timeout=5).json()
    assert stats["manual"] == 1
    assert stats["propagated"] == body["auto_propagated"]
    assert stats["queued"] == body["remaining"]
    # Labels landed in labels.jsonl with the right sources.
    lines = [json.loads(line) for line in server.session.store.path.read_text().splitlines()]
    sources = {line["clip_id"]: line["source"] for line in lines}
    assert sources["r001"] == "manual"
    assert sum(1 for s in sources.values() if s == "propagated") >= 3


def test_label_submit_unknown_label_400(server):
    response = requests.post(f"{server.url}/api/labels", json={"clip_id": "r001", "label": "Robot"}, timeout=5)
    assert response.status_code == 400
    assert "Robot" in response.json()["error"]


def test_label_submit_unknown_clip_404(server):
    response = requests.post(f"{server.url}/api/labels", json={"clip_id": "zzz", "label": "Male"}, timeout=5)
    assert response.status_code == 404


def test_label_submit_bad_body_400(server):
    response = requests.post(f"{server.url}/api/labels", data=b"not json", timeout=5)
    assert response.status_code == 400


def test_queue_exhaustion_gives_204(server):
    while True:
        response = requests.get(f"{server.url}/api/queue/next", timeout=5)
        if response.status_code == 204:
            break
        clip_id = response.json()["clip_id"]
        requests.post(f"{server.url}/api/labels", json={"clip_id": clip_id, "label": "Female"}, timeout=5)
    stats = requests.get(f"{server.url}/api/stats", timeout=5).json()
    assert stats["queued"] == 0
    assert stats["total"] == stats["manual"] + stats["propagated"]


def test_static_assets_served_when_configured(tmp_path):
    archive = build_fixture_archive(tmp_path / "arch")
    ids = [r.id for r in archive.records_with_audio()]
    signatures = {cid: signature_at_divergence(100.0 * i, cid) for i, cid in enumerate(ids)}
    static = tmp_path / "static"
    static.mkdir()
    (static / "index.html").write_text("<html><body>review</body></html>")
    session = LabelingSession(archive, signatures, LabelStore(archive.labels_path))
    srv = serve_labeling(session, host="127.0.0.1", port=0, static_dir=static)
    srv.serve_in_background()
    try:
        response = requests.get(f"{srv.url}/", timeout=5)
        assert response.status_code == 200
        assert b"review" in response.content
        assert requests.get(f"{srv.url}/../etc/passwd", timeout=5).status_code == 404
        assert requests.get(f"{srv.url}/missing.js", timeout=5).status_code == 404
    finally:
        srv.shutdown()
        srv.server_close()
