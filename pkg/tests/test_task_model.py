from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from polaris.task_model import (
    ExtractionError,
    NormalizationError,
    RawInput,
    TaskRecord,
    extract_last_json,
    normalize,
)


def test_pdf_upload_is_document_parsing():
    task = normalize(RawInput("file", "INVOICE", "2024-06-14T09:00:00Z", "upload", "inv_001.pdf"))
    assert (task.task_type, task.input_format, task.file_type) == ("document_parsing", "file", "pdf")
    assert task.file_name == "inv_001.pdf"
    assert task.is_document_task


def test_scheduler_event_is_event_triggered():
    task = normalize(RawInput("event", "month_end_day30", "2024-06-30T00:00:00Z", "scheduler"))
    assert (task.task_type, task.input_format, task.file_type) == ("event_triggered", "event", "none")
    assert not task.is_document_task


def test_empty_text_echoes_payload():
    raw = RawInput("text", "", "2024-06-14T09:00:00Z")
    with pytest.raises(NormalizationError) as err:
        normalize(raw)
    assert err.value.payload["raw"] == raw.to_json()


def test_unknown_extension_without_instruction_rejected():
    with pytest.raises(NormalizationError):
        normalize(RawInput("file", "x", "2024-06-14T09:00:00Z", "upload", "blob.xyz"))


def test_unknown_extension_with_instruction_keeps_name_in_meta():
    task = normalize(RawInput("file", "x", "2024-06-14T09:00:00Z", "upload", "blob.xyz", instruction="post it"))
    assert task.input_format == "file_plus_instruction"
    assert task.file_type == "none"
    assert task.meta["original_file_name"] == "blob.xyz"


@pytest.mark.parametrize(
    "meta, day, expected",
    [
        ({"batch": "month_end"}, "2024-06-14", True),
        ({}, "2024-06-30", True),
        ({}, "2024-02-29", True),
        ({}, "2024-06-14", False),
    ],
)
def test_month_end_detection(meta, day, expected):
    task = normalize(RawInput("file", "x", f"{day}T09:00:00Z", "upload", "a.pdf", meta=meta))
    assert task.is_month_end is expected


def test_task_record_round_trip():
    task = normalize(RawInput("file", "x", "2024-06-14T09:00:00Z", "email", "a.pdf", meta={"k": "v"}))
    assert TaskRecord.from_json(json.loads(json.dumps(task.to_json()))) == task


def test_last_json_object_wins():
    assert extract_last_json('noise {"a":1} more {"b":2}') == {"b": 2}


def test_nested_object_matches_reference_parser():
    text = '{"outer":{"inner":3}}'
    assert extract_last_json(text) == json.loads(text)


def test_no_object_raises():
    with pytest.raises(ExtractionError):
        extract_last_json("no braces here")


json_objects = st.dictionaries(st.text(min_size=1, max_size=5), st.integers() | st.text(max_size=5), max_size=4)


@given(st.lists(json_objects, min_size=1, max_size=4), st.text(alphabet="abc xyz", max_size=10))
def test_last_of_many_objects(objs, filler):
    text = filler.join(json.dumps(o) for o in objs)
    assert extract_last_json(text) == objs[-1]
