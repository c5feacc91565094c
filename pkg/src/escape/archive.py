"""On-disk interaction archive: records.jsonl, labels.jsonl, and audio/*.wav.

The records file is append-only JSONL, one interaction per line. All
mutations go through a single Archive instance (single-writer contract);
readers get plain lists they can iterate safely.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from .errors import DuplicateIdError, MalformedRecordError, MissingRecordsError

RECORDS_FILENAME = "records.jsonl"
LABELS_FILENAME = "labels.jsonl"
AUDIO_DIRNAME = "audio"

# Serialization order for records.jsonl lines; optional fields are omitted
# when absent so re-serialization is byte-stable.
_RECORD_FIELDS = ("id", "timestamp_utc", "device_serial", "device_name", "status", "transcript", "audio_file")
_REQUIRED_FIELDS = ("id", "timestamp_utc", "device_serial", "device_name", "status")


@dataclass
class InteractionRecord:
    """One scraped interaction."""

    id: str
    timestamp_utc: str
    device_serial: str
    device_name: str
    status: str
    transcript: str | None = None
    audio_file: str | None = None

    def timestamp(self) -> datetime:
        return datetime.fromisoformat(self.timestamp_utc.replace("Z", "+00:00"))

    def to_json(self) -> str:
        data = {}
        for name in _RECORD_FIELDS:
            value = getattr(self, name)
            if value is not None:
                data[name] = value
        return json.dumps(data, ensure_ascii=False)

    @classmethod
    def from_dict(cls, data: dict) -> "InteractionRecord":
        if not isinstance(data, dict):
            raise ValueError(f"expected a JSON object, got {type(data).__name__}")
        unknown = set(data) - set(_RECORD_FIELDS)
        if unknown:
            raise ValueError(f"unknown fields: {sorted(unknown)}")
        for name in _REQUIRED_FIELDS:
            if name not in data:
                raise ValueError(f"missing required field {name!r}")
            if not isinstance(data[name], str):
                raise ValueError(f"field {name!r} must be a string")
        if not data["id"]:
            raise ValueError("field 'id' must be non-empty")
        for name in ("transcript", "audio_file"):
            if name in data and not isinstance(data[name], str):
                raise ValueError(f"field {name!r} must be a string when present")
        record = cls(**data)
        try:
            record.timestamp()
        except ValueError as exc:
            raise ValueError(f"timestamp_utc is not ISO-8601: {data['timestamp_utc']!r}") from exc
        return record


@dataclass
class Archive:
    """Parsed archive plus the handle used to append new records."""

    root: Path
    records: list[InteractionRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._by_id = {record.id: record for record in self.records}

    @property
    def records_path(self) -> Path:
        return self.root / RECORDS_FILENAME

    @property
    def labels_path(self) -> Path:
        return self.root / LABELS_FILENAME

    @property
    def audio_dir(self) -> Path:
        return self.root / AUDIO_DIRNAME

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._by_id

    def get(self, record_id: str) -> InteractionRecord | None:
        return self._by_id.get(record_id)

    def audio_path(self, record: InteractionRecord) -> Path | None:
        if record.audio_file is None:
            return None
        return self.root / record.audio_file

    def records_with_audio(self) -> list[InteractionRecord]:
        return [r for r in self.records if r.audio_file is not None]

    def append_record(self, record: InteractionRecord) -> None:
        """Append one record to records.jsonl; rejects duplicate ids."""
        if record.id in self._by_id:
            raise DuplicateIdError(f"record id {record.id!r} already present in archive")
        with open(self.records_path, "a", encoding="utf-8") as fh:
            fh.write(record.to_json() + "\n")
        self.records.append(record)
        self._by_id[record.id] = record

    @classmethod
    def create(cls, path: str | Path) -> "Archive":
        """Initialize an empty archive directory (idempotent on empty dirs)."""
        root = Path(path)
        root.mkdir(parents=True, exist_ok=True)
        (root / AUDIO_DIRNAME).mkdir(exist_ok=True)
        records_path = root / RECORDS_FILENAME
        if not records_path.exists():
            records_path.touch()
        return open_archive(root)


def open_archive(path: str | Path) -> Archive:
    """Parse an archive directory, preserving record order.

    Raises MissingRecordsError if records.jsonl is absent,
    MalformedRecordError (with the line number) on unparseable lines, and
    DuplicateIdError on repeated record ids.
    """
    root = Path(path)
    records_path = root / RECORDS_FILENAME
    if not records_path.exists():
        raise MissingRecordsError(f"{records_path}: records file not found")
    records: list[InteractionRecord] = []
    seen: set[str] = set()
    with open(records_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                raise MalformedRecordError(f"{records_path}:{lineno}: blank line")
            try:
                record = InteractionRecord.from_dict(json.loads(line))
            except (json.JSONDecodeError, ValueError) as exc:
                raise MalformedRecordError(f"{records_path}:{lineno}: {exc}") from exc
            if record.id in seen:
                raise DuplicateIdError(f"{records_path}:{lineno}: duplicate record id {record.id!r}")
            seen.add(record.id)
            records.append(record)
    return Archive(root=root, records=records)
