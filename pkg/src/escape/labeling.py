"""Speaker label store and KL-threshold propagation.

Labels live in labels.jsonl (append-only, last record wins per clip).
Unlabeled clips within symmetric KL divergence < threshold of a manually
labeled clip inherit that clip's label; everything else queues for a
human. Propagation chains only from manual labels, never transitively.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .archive import Archive
from .errors import BootstrapRequiredError, LabelingError, UnknownClipError, UnknownLabelError
from .signatures import GaussianSignature, sym_kl

DEFAULT_THRESHOLD = 50.0
DEFAULT_LABEL_SET = ("Male", "Female")
SOURCES = ("manual", "propagated", "classified")


@dataclass
class LabelRecord:
    clip_id: str
    label: str
    source: str
    labeled_at: str
    nearest_id: str | None = None
    divergence: float | None = None

    def to_json(self) -> str:
        data = {"clip_id": self.clip_id, "label": self.label, "source": self.source, "labeled_at": self.labeled_at}
        if self.nearest_id is not None:
            data["provenance"] = {"nearest_id": self.nearest_id, "divergence": self.divergence}
        return json.dumps(data, ensure_ascii=False)

    @classmethod
    def from_dict(cls, data: dict) -> "LabelRecord":
        for name in ("clip_id", "label", "source", "labeled_at"):
            if not isinstance(data.get(name), str) or not data[name]:
                raise ValueError(f"missing or invalid field {name!r}")
        if data["source"] not in SOURCES:
            raise ValueError(f"unknown source {data['source']!r}")
        provenance = data.get("provenance") or {}
        return cls(
            clip_id=data["clip_id"],
            label=data["label"],
            source=data["source"],
            labeled_at=data["labeled_at"],
            nearest_id=provenance.get("nearest_id"),
            divergence=provenance.get("divergence"),
        )


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


class LabelStore:
    """Current label per clip, persisted as append-only JSONL.

    All mutations are serialized through one lock (single-writer
    contract); manual records overwrite anything, propagated records only
    fill gaps, classified records never displace manual or propagated
    ones.
    """

    def __init__(self, path: str | Path, label_set: Sequence[str] = DEFAULT_LABEL_SET, now: Callable[[], str] = _utc_now):
        self.path = Path(path)
        self.label_set = tuple(label_set)
        if len(self.label_set) < 2:
            raise LabelingError("label set needs at least two labels")
        self._now = now
        self._lock = threading.Lock()
        self._records: dict[str, LabelRecord] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        record = LabelRecord.from_dict(json.loads(line))
                    except (json.JSONDecodeError, ValueError) as exc:
                        raise LabelingError(f"{self.path}:{lineno}: {exc}") from exc
                    self._records[record.clip_id] = record

    def get(self, clip_id: str) -> LabelRecord | None:
        return self._records.get(clip_id)

    def records(self) -> dict[str, LabelRecord]:
        return dict(self._records)

    def ids_with_source(self, source: str) -> list[str]:
        return [cid for cid, rec in self._records.items() if rec.source == source]

    def counts(self) -> dict[str, int]:
        out = {source: 0 for source in SOURCES}
        for record in self._records.values():
            out[record.source] += 1
        return out

    def _append(self, record: LabelRecord) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(record.to_json() + "\n")
        self._records[record.clip_id] = record

    def _check_label(self, label: str) -> None:
        if label not in self.label_set:
            raise UnknownLabelError(f"label {label!r} not in configured set {list(self.label_set)}")

    def set_manual(self, clip_id: str, label: str) -> LabelRecord:
        """Record a human decision; overwrites any existing record."""
        self._check_label(label)
        with self._lock:
            record = LabelRecord(clip_id=clip_id, label=label, source="manual", labeled_at=self._now())
            self._append(record)
        return record

    def add_propagated(self, clip_id: str, label: str, nearest_id: str, divergence: float) -> LabelRecord | None:
        """Record a propagation result; refuses to touch already-labeled clips."""
        self._check_label(label)
        with self._lock:
            if clip_id in self._records:
                return None
            record = LabelRecord(
                clip_id=clip_id,
                label=label,
                source="propagated",
                labeled_at=self._now(),
                nearest_id=nearest_id,
                divergence=divergence,
            )
            self._append(record)
        return record

    def add_classified(self, clip_id: str, label: str) -> LabelRecord | None:
        """Record a classifier decision; never displaces manual or propagated labels."""
        self._check_label(label)
        with self._lock:
            existing = self._records.get(clip_id)
            if existing is not None and existing.source != "classified":
                return None
            record = LabelRecord(clip_id=clip_id, label=label, source="classified", labeled_at=self._now())
            self._append(record)
        return record


@dataclass
class PropagationResult:
    newly_propagated: int
    queued_ids: list[str]


def propagate(
    signatures: Mapping[str, GaussianSignature],
    store: LabelStore,
    threshold: float = DEFAULT_THRESHOLD,
) -> PropagationResult:
    """Assign each unlabeled clip its nearest manual clip's label when close enough.

    Closeness is symmetric KL divergence strictly below the threshold;
    boundary values queue for a human. Only manual labels seed
    propagation, so one pass reaches the fixpoint and a second
    consecutive pass propagates nothing.
    """
    if not store.ids_with_source("manual"):
        raise BootstrapRequiredError("no manual labels yet; label at least one clip to bootstrap propagation")
    manual = [
        (cid, store.get(cid).label)
        for cid in sorted(store.ids_with_source("manual"))
        if cid in signatures
    ]

    newly = 0
    queued: list[str] = []
    for clip_id in sorted(signatures):
        if store.get(clip_id) is not None:
            continue
        best_divergence, best_id, best_label = None, None, None
        for manual_id, label in manual:
            divergence = sym_kl(signatures[clip_id], signatures[manual_id])
            if best_divergence is None or divergence < best_divergence:
                best_divergence, best_id, best_label = divergence, manual_id, label
        if best_divergence is not None and best_divergence < threshold:
            if store.add_propagated(clip_id, best_label, best_id, best_divergence) is not None:
                newly += 1
        else:
            queued.append(clip_id)
    return PropagationResult(newly_propagated=newly, queued_ids=queued)


@dataclass
class QueueItem:
    clip_id: str
    transcript: str | None
    audio_url: str
    queued_remaining: int


@dataclass
class SubmitResult:
    accepted: bool
    auto_propagated: int
    remaining: int


class LabelingSession:
    """Serves the human-in-the-loop queue over an archive + signature set.

    The queue is every clip that has a signature but no label record yet,
    in ascending (timestamp, id) order. Submitting a manual label re-runs
    propagation so near-duplicates drain automatically.
    """

    def __init__(
        self,
        archive: Archive,
        signatures: Mapping[str, GaussianSignature],
        store: LabelStore,
        threshold: float = DEFAULT_THRESHOLD,
    ):
        self.archive = archive
        self.signatures = dict(signatures)
        self.store = store
        self.threshold = threshold
        self._mutate = threading.Lock()
        order: list[tuple[datetime, str]] = []
        for record in archive.records:
            if record.id in self.signatures:
                moment = record.timestamp()
                if moment.tzinfo is None:
                    moment = moment.replace(tzinfo=timezone.utc)
                order.append((moment, record.id))
        # Signatures for clips missing from records.jsonl would be unplayable.
        unknown = set(self.signatures) - {rid for _, rid in order}
        if unknown:
            raise LabelingError(f"signatures without archive records: {sorted(unknown)[:3]}")
        self._queue_order = [rid for _, rid in sorted(order)]

    def queued_ids(self, skip: Sequence[str] = ()) -> list[str]:
        skipped = set(skip)
        return [cid for cid in self._queue_order if self.store.get(cid) is None and cid not in skipped]

    def next_queued(self, skip: Sequence[str] = ()) -> QueueItem | None:
        queue = self.queued_ids(skip)
        if not queue:
            return None
        head = queue[0]
        record = self.archive.get(head)
        return QueueItem(
            clip_id=head,
            transcript=record.transcript,
            audio_url=f"/api/audio/{head}",
            queued_remaining=len(queue),
        )

    def submit_label(self, clip_id: str, label: str) -> SubmitResult:
        """Accept one human decision, then re-propagate from all manual labels."""
        if self.archive.get(clip_id) is None:
            raise UnknownClipError(f"unknown clip {clip_id!r}")
        with self._mutate:
            self.store.set_manual(clip_id, label)
            result = propagate(self.signatures, self.store, self.threshold)
        return SubmitResult(
            accepted=True,
            auto_propagated=result.newly_propagated,
            remaining=len(result.queued_ids),
        )

    def stats(self) -> dict[str, int]:
        counts = self.store.counts()
        queued = len(self.queued_ids())
        total = queued + sum(counts.values())
        return {**counts, "queued": queued, "total": total}
