"""Canonical task records and the deterministic input normalizer."""

from __future__ import annotations

import calendar
import json
from dataclasses import dataclass, field
from datetime import datetime
from functools import lru_cache
from importlib import resources
from typing import Any, Literal, Optional, Union

import yaml

TASK_TYPES = ("document_parsing", "user_command", "event_triggered")
INPUT_FORMATS = ("file", "text", "file_plus_instruction", "event")
FILE_TYPES = ("pdf", "png", "eml", "csv", "txt", "none")
RECORD_FIELDS = (
    "task_type",
    "input_format",
    "file_name",
    "file_type",
    "timestamp",
    "origin",
    "instruction",
    "meta",
)


class NormalizationError(Exception):
    """Raw input could not be categorized; ``payload`` echoes what was received."""

    def __init__(self, message: str, payload: dict[str, Any]):
        super().__init__(message)
        self.payload = payload

    def to_json(self) -> dict[str, Any]:
        return {"error": str(self), **self.payload}


class ExtractionError(Exception):
    def __init__(self, message: str, text: str):
        super().__init__(message)
        self.text = text


def parse_instant(value: str) -> datetime:
    # fromisoformat on 3.10 rejects a trailing Z
    if value.endswith("Z"):
        value = value[:-1] + "+00:00"
    return datetime.fromisoformat(value)


@dataclass(frozen=True)
class RawInput:
    kind: Literal["file", "text", "event"]
    payload: Union[bytes, str]
    received_at: str
    channel: str = "upload"
    filename: Optional[str] = None
    instruction: str = ""
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in ("file", "text", "event"):
            raise ValueError(f"unknown input kind {self.kind!r}")
        if self.kind == "file" and (not self.filename or not self.payload):
            raise ValueError("file inputs need a filename and a non-empty payload")
        try:
            parse_instant(self.received_at)
        except ValueError as exc:
            raise ValueError(f"received_at is not ISO-8601: {self.received_at!r}") from exc

    def payload_text(self) -> str:
        if isinstance(self.payload, bytes):
            return self.payload.decode("utf-8", errors="replace")
        return self.payload

    def to_json(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "payload": self.payload_text(),
            "received_at": self.received_at,
            "channel": self.channel,
            "filename": self.filename,
            "instruction": self.instruction,
            "meta": dict(sorted(self.meta.items())),
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "RawInput":
        return cls(
            kind=data["kind"],
            payload=data["payload"],
            received_at=data["received_at"],
            channel=data.get("channel", "upload"),
            filename=data.get("filename"),
            instruction=data.get("instruction", ""),
            meta=dict(data.get("meta", {})),
        )


@dataclass(frozen=True)
class TaskRecord:
    task_type: str
    input_format: str
    file_name: str
    file_type: str
    timestamp: str
    origin: str
    instruction: str
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.task_type not in TASK_TYPES:
            raise ValueError(f"bad task_type {self.task_type!r}")
        if self.input_format not in INPUT_FORMATS:
            raise ValueError(f"bad input_format {self.input_format!r}")
        if self.file_type not in FILE_TYPES:
            raise ValueError(f"bad file_type {self.file_type!r}")
        if (self.file_type == "none") != (self.file_name == ""):
            raise ValueError("file_type is 'none' exactly when file_name is empty")

    def to_json(self) -> dict[str, Any]:
        return {
            "task_type": self.task_type,
            "input_format": self.input_format,
            "file_name": self.file_name,
            "file_type": self.file_type,
            "timestamp": self.timestamp,
            "origin": self.origin,
            "instruction": self.instruction,
            "meta": dict(sorted(self.meta.items())),
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "TaskRecord":
        return cls(**{k: data[k] for k in RECORD_FIELDS})

    @property
    def is_document_task(self) -> bool:
        return self.task_type == "document_parsing"

    @property
    def day_of_month(self) -> int:
        return parse_instant(self.timestamp).day

    @property
    def is_month_end(self) -> bool:
        if self.meta.get("batch") == "month_end" or "month_end" in self.instruction.lower():
            return True
        ts = parse_instant(self.timestamp)
        return ts.day >= 30 or ts.day == calendar.monthrange(ts.year, ts.month)[1]

    @property
    def has_vendor(self) -> bool:
        return self.is_document_task or bool(self.meta.get("vendor"))


@lru_cache(maxsize=1)
def categorization_table() -> dict[str, dict[str, str]]:
    text = resources.files("polaris.data").joinpath("categories.yaml").read_text()
    return yaml.safe_load(text)


def _file_type(raw: RawInput, table: dict[str, dict[str, str]]) -> Optional[str]:
    ext = ""
    if raw.filename and "." in raw.filename:
        ext = raw.filename.rsplit(".", 1)[1].lower()
    if ext in table["extension_to_file_type"]:
        return table["extension_to_file_type"][ext]
    head = raw.payload[:8]
    if isinstance(head, str):
        head = head.encode("latin-1", errors="replace")
    for prefix, ftype in table["payload_prefix_to_file_type"].items():
        if head.startswith(prefix.encode("latin-1")):
            return ftype
    return None


def normalize(raw: RawInput) -> TaskRecord:
    """Map a raw input to a TaskRecord using the static categorization table."""
    table = categorization_table()
    text = raw.payload_text()
    if not text.strip():
        raise NormalizationError("empty payload has no category", {"raw": raw.to_json()})

    origin = table["channel_to_origin"].get(raw.channel.lower(), raw.channel.lower() or "unknown")
    meta = {"channel": raw.channel, **raw.meta}
    timestamp = parse_instant(raw.received_at).isoformat()
    task_type = table["kind_to_task_type"][raw.kind]

    if raw.kind == "event":
        return TaskRecord(task_type, "event", "", "none", timestamp, origin, raw.instruction or text.strip(), meta)
    if raw.kind == "text":
        return TaskRecord(task_type, "text", "", "none", timestamp, origin, raw.instruction or text.strip(), meta)

    ftype = _file_type(raw, table)
    if ftype is None:
        if not raw.instruction:
            raise NormalizationError(
                f"unrecognized file type for {raw.filename!r} and no instruction",
                {"raw": raw.to_json()},
            )
        # unknown extension: keep the name in meta so file_type/file_name stay consistent
        meta["original_file_name"] = raw.filename or ""
        return TaskRecord(task_type, "file_plus_instruction", "", "none", timestamp, origin, raw.instruction, meta)
    fmt = "file_plus_instruction" if raw.instruction else "file"
    return TaskRecord(task_type, fmt, raw.filename or "", ftype, timestamp, origin, raw.instruction, meta)


def extract_last_json(text: str) -> dict[str, Any]:
    """Return the last complete top-level JSON object embedded in ``text``."""
    decoder = json.JSONDecoder()
    last: Optional[dict[str, Any]] = None
    i = 0
    n = len(text)
    while i < n:
        if text[i] != "{":
            i += 1
            continue
        try:
            obj, end = decoder.raw_decode(text, i)
        except json.JSONDecodeError:
            i += 1
            continue
        if isinstance(obj, dict):
            last = obj
        i = end
    if last is None:
        raise ExtractionError("no complete JSON object found", text)
    return last
