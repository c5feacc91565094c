"""Cookie-session paginated scraping client.

Endpoint paths are configuration (templates with {offset}, {size}, {id}
placeholders), not constants: the upstream service documents no API and
its endpoints drift, so conformance is defined against the bundled mock
fixtures. The listing payload schema the client expects is this
project's own definition:

    {"activities": [{"id": ..., "timestamp_utc": ..., "device_serial": ...,
                     "device_name": ..., "status": ..., "transcript": ...,
                     "has_audio": true}, ...]}

An empty "activities" list ends pagination.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from urllib.parse import urlparse

import requests

from .archive import AUDIO_DIRNAME, Archive, InteractionRecord
from .errors import AuthenticationError, NetworkError, ScrapeError

log = logging.getLogger(__name__)

BACKOFF_CAP_SECONDS = 10.0


@dataclass
class ScrapeConfig:
    base_url: str
    cookie: str
    page_size: int = 50
    activities_template: str = "/api/activities?offset={offset}&size={size}"
    audio_template: str = "/api/audio/{id}"
    max_retries: int = 3
    backoff_ms: int = 250
    timeout_s: float = 30.0
    jobs: int = 4

    def validate(self) -> None:
        if not self.cookie:
            raise ScrapeError("cookie is empty; set ESCAPE_COOKIE or pass --cookie-file")
        parsed = urlparse(self.base_url)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise ScrapeError(f"base_url {self.base_url!r} is not a well-formed http(s) URL")
        if self.page_size < 1:
            raise ScrapeError("page_size must be at least 1")


@dataclass
class ScrapeResult:
    new_records: int = 0
    audio_files: int = 0
    skipped_existing: int = 0
    skipped_malformed: int = 0
    pages: int = 0
    errors: list[str] = field(default_factory=list)


def _get(session: requests.Session, config: ScrapeConfig, url: str) -> requests.Response:
    """GET with the configured cookie, bounded exponential backoff on transient failures."""
    last_error: Exception | None = None
    for attempt in range(config.max_retries + 1):
        if attempt > 0:
            delay = min(config.backoff_ms / 1000.0 * 2 ** (attempt - 1), BACKOFF_CAP_SECONDS)
            time.sleep(delay)
        try:
            response = session.get(
                url,
                headers={"Cookie": config.cookie},
                timeout=config.timeout_s,
                allow_redirects=True,
            )
        except (requests.ConnectionError, requests.Timeout) as exc:
            last_error = exc
            log.warning("request failed (%s), attempt %d/%d", exc, attempt + 1, config.max_retries + 1)
            continue
        if response.status_code in (401, 403):
            raise AuthenticationError(
                f"authentication failed (HTTP {response.status_code}) at {url}: "
                "cookie expired or invalid; copy a fresh Cookie header from a signed-in browser session"
            )
        if response.status_code >= 500:
            last_error = ScrapeError(f"HTTP {response.status_code} at {url}")
            log.warning("server error %d, attempt %d/%d", response.status_code, attempt + 1, config.max_retries + 1)
            continue
        if response.status_code != 200:
            raise ScrapeError(f"unexpected HTTP {response.status_code} at {url}")
        return response
    raise NetworkError(f"giving up on {url} after {config.max_retries + 1} attempts: {last_error}")


def _parse_activity(payload: object) -> tuple[InteractionRecord, bool]:
    if not isinstance(payload, dict):
        raise ValueError(f"activity is not an object: {type(payload).__name__}")
    has_audio = bool(payload.pop("has_audio", False))
    record = InteractionRecord.from_dict(payload)
    # Ids become audio filenames; refuse anything that could escape audio/.
    if any(ch in record.id for ch in "/\\") or record.id in (".", ".."):
        raise ValueError(f"id {record.id!r} is not filesystem-safe")
    return record, has_audio


def scrape(config: ScrapeConfig, archive: Archive, session: requests.Session | None = None) -> ScrapeResult:
    """Page through the activity listing and add everything new to the archive.

    Idempotent: activities whose id is already in the archive are
    skipped, so a second run against the same server state adds nothing.
    Audio bytes are stored exactly as downloaded. Malformed activity
    payloads are logged, counted, and skipped.
    """
    config.validate()
    own_session = session is None
    session = session or requests.Session()
    result = ScrapeResult()
    try:
        offset = 0
        while True:
            url = config.base_url + config.activities_template.format(offset=offset, size=config.page_size)
            try:
                listing = _get(session, config, url).json()
            except requests.exceptions.JSONDecodeError as exc:
                raise ScrapeError(f"listing at {url} is not JSON: {exc}") from exc
            activities = listing.get("activities") if isinstance(listing, dict) else None
            if not isinstance(activities, list):
                raise ScrapeError(f"listing at {url} has no 'activities' array")
            result.pages += 1
            if not activities:
                break
            offset += len(activities)

            page_records: list[tuple[InteractionRecord, bool]] = []
            for index, payload in enumerate(activities):
                try:
                    record, has_audio = _parse_activity(dict(payload) if isinstance(payload, dict) else payload)
                except ValueError as exc:
                    message = f"page {result.pages}, activity {index}: {exc}"
                    log.warning("skipping malformed activity payload: %s", message)
                    result.errors.append(message)
                    result.skipped_malformed += 1
                    continue
                if record.id in archive:
                    result.skipped_existing += 1
                    continue
                page_records.append((record, has_audio))

            downloads = {}
            to_fetch = [record.id for record, has_audio in page_records if has_audio]

            def fetch(clip_id: str) -> tuple[str, bytes | None]:
                audio_url = config.base_url + config.audio_template.format(id=clip_id)
                try:
                    return clip_id, _get(session, config, audio_url).content
                except ScrapeError as exc:
                    if isinstance(exc, (AuthenticationError, NetworkError)):
                        raise
                    log.warning("audio for %s unavailable: %s", clip_id, exc)
                    return clip_id, None

            if to_fetch:
                if config.jobs > 1:
                    with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                        downloads = dict(pool.map(fetch, to_fetch))
                else:
                    downloads = dict(fetch(cid) for cid in to_fetch)

            # Records are appended in listing order, by this thread only.
            for record, has_audio in page_records:
                body = downloads.get(record.id)
                if has_audio and body is not None:
                    audio_path = archive.audio_dir / f"{record.id}.wav"
                    audio_path.parent.mkdir(parents=True, exist_ok=True)
                    audio_path.write_bytes(body)
                    record.audio_file = f"{AUDIO_DIRNAME}/{record.id}.wav"
                    result.audio_files += 1
                archive.append_record(record)
                result.new_records += 1
    finally:
        if own_session:
            session.close()
    return result
