"""Deterministic labeled-pattern parser.

A plain parse accepts only canonical labels and canonical value formats, so a
corrupted field comes back absent. A hinted parse re-extracts just the hinted
fields with synonym labels, a line-shift window inside the hinted region, and
the field's normalizer. Every repair the relaxed path has to make counts as one
observed corruption and costs the field 0.15 confidence (floor 0.1).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import date
from decimal import Decimal, InvalidOperation
from typing import Any, Callable, Mapping, Optional, Sequence

from ..contracts import ISO_4217
from .documents import (
    DATE_FIELDS,
    FIELDS,
    ILLEGIBLE,
    ITEM_LABEL,
    LABEL_SYNONYMS,
    LABELS,
    NORMALIZERS,
    OCR_DIGITS,
    ExtractedInvoice,
    SyntheticDocument,
)

PENALTY_PER_CORRUPTION = 0.15
CONFIDENCE_FLOOR = 0.1
SHIFT_WINDOW = 2

# default zones (half-open line ranges; negative start counts from the end)
ROI_ZONES: dict[str, tuple[int, Optional[int]]] = {
    "invoice_number": (0, 9),
    "vendor": (0, 9),
    "issue_date": (0, 10),
    "due_date": (0, 10),
    "payment_date": (0, 12),
    "currency": (0, 12),
    "total": (-5, None),
}
FIELD_NORMALIZER = {
    "invoice_number": "ocr_digits",
    "issue_date": "date",
    "due_date": "date",
    "payment_date": "date",
    "total": "amount",
    "currency": "currency",
    "vendor": None,
}

_INVOICE_NO = re.compile(r"INV-\d{6}")
_VENDOR = re.compile(r"[A-Za-z0-9][A-Za-z0-9&.,' -]*")
_ISO_DATE = re.compile(r"\d{4}-\d{2}-\d{2}")
_AMOUNT = re.compile(r"\d+\.\d{2}")
_CURRENCY = re.compile(r"[A-Z]{3}")
_CURRENCY_SYMBOLS = {"US$": "USD", "$": "USD", "€": "EUR", "£": "GBP", "¥": "JPY"}
_LETTER_LOOKALIKES = {"5": "S", "0": "O", "1": "I", "8": "B", "2": "Z"}


@dataclass(frozen=True)
class FieldHint:
    roi: Optional[tuple[int, Optional[int]]] = None
    relaxed: bool = True
    normalizer: Optional[str] = None
    schema_prompt: str = ""

    def __post_init__(self) -> None:
        if self.normalizer is not None and self.normalizer not in NORMALIZERS:
            raise ValueError(f"unknown normalizer {self.normalizer!r}")

    def to_json(self) -> dict[str, Any]:
        return {
            "roi": list(self.roi) if self.roi is not None else None,
            "relaxed": self.relaxed,
            "normalizer": self.normalizer,
            "schema_prompt": self.schema_prompt,
        }


@dataclass(frozen=True)
class RepairHints:
    fields: Mapping[str, FieldHint] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return bool(self.fields)

    def __iter__(self):
        return iter(self.fields)

    def __contains__(self, name: str) -> bool:
        return name in self.fields

    def to_json(self) -> dict[str, Any]:
        return {k: self.fields[k].to_json() for k in sorted(self.fields)}


def confidence_for(cues: int) -> float:
    return round(max(CONFIDENCE_FLOOR, 1.0 - PENALTY_PER_CORRUPTION * cues), 4)


# strict value parsers: canonical format or None


def _valid_date(text: str) -> Optional[date]:
    try:
        return date.fromisoformat(text)
    except ValueError:
        return None


def strict_value(name: str, text: str) -> Any:
    text = text.strip()
    if not text:
        return None
    if name == "invoice_number":
        return text if _INVOICE_NO.fullmatch(text) else None
    if name == "vendor":
        return text if _VENDOR.fullmatch(text) else None
    if name in DATE_FIELDS:
        return _valid_date(text) if _ISO_DATE.fullmatch(text) else None
    if name == "currency":
        return text if _CURRENCY.fullmatch(text) and text in ISO_4217 else None
    if name == "total":
        return Decimal(text) if _AMOUNT.fullmatch(text) else None
    raise KeyError(name)


# relaxed value parsers: (value, corrections made) or None


def _ocr_to_digits(text: str) -> tuple[str, int]:
    out, fixes = [], 0
    for c in text:
        if c in OCR_DIGITS:
            out.append(OCR_DIGITS[c])
            fixes += 1
        else:
            out.append(c)
    return "".join(out), fixes


def _relaxed_invoice_number(text: str) -> Optional[tuple[str, int]]:
    text = text.strip()
    if not text.upper().startswith("INV-"):
        return None
    body, fixes = _ocr_to_digits(text[4:])
    value = "INV-" + body
    return (value, fixes) if _INVOICE_NO.fullmatch(value) else None


def _relaxed_date(text: str) -> Optional[tuple[date, int]]:
    text, fixes = _ocr_to_digits(text.strip())
    m = re.fullmatch(r"(\d{4})([-/])(\d{2})\2(\d{2})", text)
    if m:
        y, sep, mo, d = m.groups()
        extra = 0 if sep == "-" else 1
    else:
        m = re.fullmatch(r"(\d{2})\.(\d{2})\.(\d{4})", text)
        if not m:
            return None
        d, mo, y = m.groups()
        extra = 1
    try:
        return date(int(y), int(mo), int(d)), fixes + extra
    except ValueError:
        return None


def _relaxed_amount(text: str) -> Optional[tuple[Decimal, int]]:
    text = text.strip()
    for sym in sorted(_CURRENCY_SYMBOLS, key=len, reverse=True):
        if text.startswith(sym):
            text = text[len(sym) :].strip()
            break
    text, fixes = _ocr_to_digits(text)
    if re.fullmatch(r"\d+\.\d{2}", text):
        plain, extra = text, 0
    elif re.fullmatch(r"\d{1,3}(,\d{3})+\.\d{2}", text):
        plain, extra = text.replace(",", ""), 0
    elif re.fullmatch(r"\d{1,3}(\.\d{3})+,\d{2}", text) or re.fullmatch(r"\d+,\d{2}", text):
        plain, extra = text.replace(".", "").replace(",", "."), 1
    else:
        return None
    try:
        return Decimal(plain), fixes + extra
    except InvalidOperation:
        return None


def _relaxed_vendor(text: str) -> Optional[tuple[str, int]]:
    if any(c in ILLEGIBLE for c in text):
        return None
    value = " ".join(text.split())
    return (value, 0) if _VENDOR.fullmatch(value) else None


def _relaxed_currency(text: str) -> Optional[tuple[str, int]]:
    text = text.strip()
    if text in _CURRENCY_SYMBOLS:
        return _CURRENCY_SYMBOLS[text], 0
    fixes = 0
    out = []
    for c in text.upper():
        if c in _LETTER_LOOKALIKES:
            out.append(_LETTER_LOOKALIKES[c])
            fixes += 1
        else:
            out.append(c)
    value = "".join(out)
    return (value, fixes) if value in ISO_4217 else None


_RELAXED: dict[str, Callable[[str], Optional[tuple[Any, int]]]] = {
    "invoice_number": _relaxed_invoice_number,
    "vendor": _relaxed_vendor,
    "issue_date": _relaxed_date,
    "due_date": _relaxed_date,
    "payment_date": _relaxed_date,
    "currency": _relaxed_currency,
    "total": _relaxed_amount,
}


def _split(line: str) -> tuple[Optional[str], str]:
    label, sep, value = line.partition(":")
    if not sep:
        return None, line.strip()
    return label.strip(), value.strip()


def _resolve_roi(roi: Optional[tuple[int, Optional[int]]], n: int) -> tuple[int, int]:
    if roi is None:
        return 0, n
    lo, hi = roi
    lo = max(0, n + lo) if lo < 0 else min(lo, n)
    hi = n if hi is None else (max(0, n + hi) if hi < 0 else min(hi, n))
    return lo, hi


def _strict_field(lines: Sequence[str], name: str) -> Any:
    want = LABELS[name].casefold()
    for line in lines:
        label, value = _split(line)
        if label is not None and label.casefold() == want:
            return strict_value(name, value)
    return None


def _relaxed_field(lines: Sequence[str], name: str, hint: FieldHint) -> Optional[tuple[Any, int]]:
    lo, hi = _resolve_roi(hint.roi, len(lines))
    canonical = LABELS[name].casefold()
    synonyms = {s.casefold() for s in LABEL_SYNONYMS[name]}
    for i in range(lo, hi):
        label, value = _split(lines[i])
        if label is None:
            continue
        key = label.casefold()
        if key != canonical and key not in synonyms:
            continue
        cues = 0 if key == canonical else 1
        if not value:
            # value displaced below its label; look inside the region only
            for j in range(i + 1, min(i + 1 + SHIFT_WINDOW, hi)):
                lab, val = _split(lines[j])
                if lab is None and val:
                    value = val
                    cues += 1
                    break
        if not value:
            return None
        if not hint.relaxed:
            parsed = strict_value(name, value)
            return (parsed, cues) if parsed is not None else None
        hit = _RELAXED[name](value)
        if hit is None:
            return None
        parsed, fixes = hit
        return parsed, cues + fixes
    return None


def _line_items(lines: Sequence[str]) -> tuple[Decimal, ...]:
    amounts = []
    for line in lines:
        label, value = _split(line)
        if label != ITEM_LABEL or "|" not in value:
            continue
        amount = value.rpartition("|")[2].strip()
        if _AMOUNT.fullmatch(amount):
            amounts.append(Decimal(amount))
    return tuple(amounts)


def parse(doc: SyntheticDocument, hints: Optional[RepairHints] = None) -> ExtractedInvoice:
    """Extract invoice fields; with hints, only the hinted fields are re-extracted."""
    lines = doc.lines
    values: dict[str, Any] = {}
    confidence: dict[str, float] = {}
    if not hints:
        for name in FIELDS:
            v = _strict_field(lines, name)
            if v is not None:
                values[name] = v
                confidence[name] = 1.0
        return ExtractedInvoice(**values, line_items=_line_items(lines), confidence=confidence)
    for name, hint in hints.fields.items():
        hit = _relaxed_field(lines, name, hint)
        if hit is not None:
            values[name], cues = hit
            confidence[name] = confidence_for(cues)
    return ExtractedInvoice(**values, confidence=confidence)
