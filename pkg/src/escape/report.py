"""Usage reports: status counts, device counts, and intent categories.

Intent categorization is regex matching against the transcript in a
fixed precedence order; records with no transcript (or a bare wake word)
count as Error. Every transcript lands in exactly one category.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from .archive import Archive
from .errors import UnknownLabelError
from .labeling import LabelStore


class IntentCategory(Enum):
    TIMER = "Timer"
    VOLUME_CONTROL = "VolumeControl"
    WEATHER = "Weather"
    MUSIC = "Music"
    SHOPPING = "Shopping"
    CALENDAR = "Calendar"
    SPORT = "Sport"
    ERROR = "Error"
    OTHER = "Other"


# Checked in order; first match wins. The Shopping pattern is
# "shopping list" (the published pattern "shopping listen" cannot match
# its own canonical example transcript).
_PATTERNS: tuple[tuple[IntentCategory, re.Pattern], ...] = (
    (IntentCategory.TIMER, re.compile(r"timer", re.IGNORECASE)),
    (IntentCategory.VOLUME_CONTROL, re.compile(r"volume", re.IGNORECASE)),
    (IntentCategory.WEATHER, re.compile(r"weather|rain|temperature", re.IGNORECASE)),
    (IntentCategory.MUSIC, re.compile(r"play|stop|pause|track|listen|skip", re.IGNORECASE)),
    (IntentCategory.SHOPPING, re.compile(r"shopping list", re.IGNORECASE)),
    (IntentCategory.CALENDAR, re.compile(r"calendar", re.IGNORECASE)),
    (IntentCategory.SPORT, re.compile(r"football|score", re.IGNORECASE)),
)
_ERROR_PATTERN = re.compile(r"^alexa$|^$", re.IGNORECASE)


def categorize(transcript: str | None) -> IntentCategory:
    """Map a transcript onto exactly one intent category."""
    if transcript is None or _ERROR_PATTERN.fullmatch(transcript):
        return IntentCategory.ERROR
    for category, pattern in _PATTERNS:
        if pattern.search(transcript):
            return category
    return IntentCategory.OTHER


@dataclass
class UsageReport:
    status_counts: dict[str, int] = field(default_factory=dict)
    device_counts: dict[tuple[str, str], int] = field(default_factory=dict)  # (name, serial) -> count
    intent_counts: dict[IntentCategory, int] = field(default_factory=dict)
    speaker_filter: str | None = None
    intent_records: int = 0
    total_records: int = 0
    with_audio_and_text: int = 0
    with_audio_only: int = 0
    with_text_only: int = 0
    with_neither: int = 0


def usage_report(archive: Archive, label_store: LabelStore | None = None, speaker_filter: str | None = None) -> UsageReport:
    """Count statuses, devices, and intents over an archive.

    When speaker_filter is given, intent counts are restricted to records
    whose clip carries that label (any source); status and device counts
    always cover the whole archive.
    """
    labels: Mapping[str, str] = {}
    if speaker_filter is not None:
        if label_store is None:
            raise UnknownLabelError("speaker_filter requires a label store")
        if speaker_filter not in label_store.label_set:
            raise UnknownLabelError(f"label {speaker_filter!r} not in configured set {list(label_store.label_set)}")
        labels = {cid: rec.label for cid, rec in label_store.records().items()}

    report = UsageReport(speaker_filter=speaker_filter, total_records=len(archive.records))
    status = Counter()
    devices = Counter()
    intents = Counter({category: 0 for category in IntentCategory})
    for record in archive.records:
        status[record.status] += 1
        devices[(record.device_name, record.device_serial)] += 1
        has_audio = record.audio_file is not None
        has_text = record.transcript is not None and record.transcript != ""
        if has_audio and has_text:
            report.with_audio_and_text += 1
        elif has_audio:
            report.with_audio_only += 1
        elif has_text:
            report.with_text_only += 1
        else:
            report.with_neither += 1
        if speaker_filter is not None and labels.get(record.id) != speaker_filter:
            continue
        intents[categorize(record.transcript)] += 1
        report.intent_records += 1
    report.status_counts = dict(status)
    report.device_counts = dict(devices)
    report.intent_counts = dict(intents)
    return report


def render_text(report: UsageReport) -> str:
    """Human-readable tables for stdout."""
    lines: list[str] = []
    lines.append(f"records: {report.total_records}")
    lines.append(
        f"  audio+text: {report.with_audio_and_text}  audio only: {report.with_audio_only}"
        f"  text only: {report.with_text_only}  neither: {report.with_neither}"
    )
    lines.append("")
    lines.append("status counts:")
    for name, count in sorted(report.status_counts.items(), key=lambda kv: (-kv[1], kv[0])):
        lines.append(f"  {name:<24} {count}")
    lines.append("")
    lines.append("device counts:")
    for (name, serial), count in sorted(report.device_counts.items(), key=lambda kv: (-kv[1], kv[0])):
        lines.append(f"  {name} ({serial}):".ljust(40) + f" {count}")
    lines.append("")
    suffix = f" (speaker: {report.speaker_filter}, {report.intent_records} records)" if report.speaker_filter else ""
    lines.append(f"intent counts{suffix}:")
    for category in IntentCategory:
        lines.append(f"  {category.value:<24} {report.intent_counts.get(category, 0)}")
    return "\n".join(lines) + "\n"


def status_csv(report: UsageReport) -> str:
    rows = sorted(report.status_counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return "status,count\n" + "".join(f"{name},{count}\n" for name, count in rows)


def device_csv(report: UsageReport) -> str:
    rows = sorted(report.device_counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return "device_name,device_serial,count\n" + "".join(f"{name},{serial},{count}\n" for (name, serial), count in rows)


def intent_csv(report: UsageReport) -> str:
    return "category,count\n" + "".join(
        f"{category.value},{report.intent_counts.get(category, 0)}\n" for category in IntentCategory
    )
