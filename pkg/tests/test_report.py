"""Intent categorization and the usage report."""

from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from escape.archive import Archive
from escape.errors import UnknownLabelError
from escape.labeling import LabelStore
from escape.report import IntentCategory, categorize, device_csv, intent_csv, status_csv, usage_report

from conftest import FIXTURE_ROWS, build_fixture_archive


class TestCategorize:
    @pytest.mark.parametrize(
        "transcript,expected",
        [
            ("set timer for five minutes", IntentCategory.TIMER),
            ("play the smiths", IntentCategory.MUSIC),
            ("alexa", IntentCategory.ERROR),
            ("how much does a tablespoon of sugar weigh", IntentCategory.OTHER),
            ("volume eight", IntentCategory.VOLUME_CONTROL),
            ("what's the weather like today", IntentCategory.WEATHER),
            ("add milk to the shopping list", IntentCategory.SHOPPING),
            ("what's on my calendar tomorrow", IntentCategory.CALENDAR),
            ("what's the football score", IntentCategory.SPORT),
            ("will it rain", IntentCategory.WEATHER),
            ("skip this", IntentCategory.MUSIC),
        ],
    )
    def test_table_examples(self, transcript, expected):
        assert categorize(transcript) == expected

    def test_absent_or_empty_is_error(self):
        assert categorize(None) == IntentCategory.ERROR
        assert categorize("") == IntentCategory.ERROR
        assert categorize("ALEXA") == IntentCategory.ERROR

    def test_precedence_timer_beats_music(self):
        # "play" and "timer" both present; Timer is checked first.
        assert categorize("play a timer sound") == IntentCategory.TIMER

    def test_music_listen_beats_shopping(self):
        assert categorize("listen to my shopping list") == IntentCategory.MUSIC

    def test_case_insensitive(self):
        assert categorize("SET TIMER NOW") == IntentCategory.TIMER

    @given(st.one_of(st.none(), st.text(max_size=60)))
    def test_total_function(self, transcript):
        assert categorize(transcript) in IntentCategory


class TestUsageReport:
    def test_fixture_counts(self, fixture_archive):
        report = usage_report(fixture_archive)
        assert report.status_counts == {"SUCCESS": 7, "FAULT": 3}
        assert report.device_counts == {("Kitchen Dot", "SER-A"): 6, ("Living Room Echo", "SER-B"): 4}
        assert report.total_records == 10
        assert report.with_audio_and_text == 7
        assert report.with_audio_only == 1
        assert report.with_text_only == 1
        assert report.with_neither == 1

    def test_intent_counts_partition_records(self, fixture_archive):
        report = usage_report(fixture_archive)
        assert sum(report.intent_counts.values()) == report.intent_records == 10
        assert report.intent_counts[IntentCategory.TIMER] == 1
        assert report.intent_counts[IntentCategory.MUSIC] == 1
        assert report.intent_counts[IntentCategory.ERROR] == 3  # "alexa" + two missing transcripts

    def test_empty_archive(self, tmp_path):
        report = usage_report(Archive.create(tmp_path / "empty"))
        assert report.total_records == 0
        assert report.status_counts == {}
        assert sum(report.intent_counts.values()) == 0

    def test_speaker_filter_restricts_intents_only(self, fixture_archive):
        store = LabelStore(fixture_archive.labels_path)
        store.set_manual("r001", "Male")
        store.set_manual("r002", "Male")
        store.set_manual("r003", "Female")
        report = usage_report(fixture_archive, store, speaker_filter="Male")
        assert report.status_counts == {"SUCCESS": 7, "FAULT": 3}  # unchanged
        assert report.intent_records == 2
        assert report.intent_counts[IntentCategory.TIMER] == 1
        assert report.intent_counts[IntentCategory.MUSIC] == 1
        assert sum(report.intent_counts.values()) == 2

    def test_speaker_filter_with_no_clips(self, fixture_archive):
        store = LabelStore(fixture_archive.labels_path)
        store.set_manual("r001", "Male")
        report = usage_report(fixture_archive, store, speaker_filter="Female")
        assert report.intent_records == 0
        assert sum(report.intent_counts.values()) == 0
        assert report.status_counts == {"SUCCESS": 7, "FAULT": 3}

    def test_unknown_speaker_label_rejected(self, fixture_archive):
        store = LabelStore(fixture_archive.labels_path)
        with pytest.raises(UnknownLabelError):
            usage_report(fixture_archive, store, speaker_filter="Robot")

    def test_pure_function_of_inputs(self, fixture_archive):
        assert usage_report(fixture_archive) == usage_report(fixture_archive)


class TestCsvRendering:
    def test_status_csv(self, fixture_archive):
        text = status_csv(usage_report(fixture_archive))
        assert text.splitlines()[0] == "status,count"
        assert "SUCCESS,7" in text
        assert "FAULT,3" in text

    def test_device_csv(self, fixture_archive):
        text = device_csv(usage_report(fixture_archive))
        assert "Kitchen Dot,SER-A,6" in text
        assert "Living Room Echo,SER-B,4" in text

    def test_intent_csv_lists_every_category(self, fixture_archive):
        text = intent_csv(usage_report(fixture_archive))
        for category in IntentCategory:
            assert f"{category.value}," in text


def test_fixture_rows_match_docstring():
    statuses = [row[1] for row in FIXTURE_ROWS]
    assert statuses.count("SUCCESS") == 7
    assert statuses.count("FAULT") == 3
    devices = [row[2] for row in FIXTURE_ROWS]
    assert devices.count("A") == 6
    assert devices.count("B") == 4
    assert sum(1 for row in FIXTURE_ROWS if row[4]) == 8
