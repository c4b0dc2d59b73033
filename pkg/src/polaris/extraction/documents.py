"""Synthetic labeled-line documents, extracted invoice records, and the noise model."""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from decimal import Decimal
from typing import Any, Mapping, Optional

FIELDS = ("invoice_number", "issue_date", "due_date", "payment_date", "vendor", "total", "currency")
REQUIRED_FIELDS = ("invoice_number", "issue_date", "vendor", "total")
DATE_FIELDS = ("issue_date", "due_date", "payment_date")

LABELS = {
    "invoice_number": "Invoice Number",
    "vendor": "Vendor",
    "issue_date": "Issue Date",
    "due_date": "Due Date",
    "payment_date": "Payment Date",
    "currency": "Currency",
    "total": "Total",
}
LABEL_SYNONYMS = {
    "invoice_number": ("Invoice No.", "Inv #", "Bill Number"),
    "vendor": ("Supplier", "Bill From", "Seller"),
    "issue_date": ("Invoice Date", "Dated"),
    "due_date": ("Payment Due", "Due By"),
    "payment_date": ("Paid On",),
    "currency": ("Curr.", "Currency Code"),
    "total": ("Amount Due", "Grand Total", "Balance Due"),
}
ITEM_LABEL = "Item"

# digit -> OCR look-alike glyph, and the inverse used by the normalizer
OCR_GLYPHS = {"0": "O", "1": "l", "2": "Z", "5": "S", "8": "B"}
OCR_DIGITS = {"O": "0", "o": "0", "l": "1", "I": "1", "|": "1", "Z": "2", "S": "5", "B": "8"}
ILLEGIBLE = frozenset("#?�▒")

CORRUPTION_CLASSES = ("char_substitution", "label_swap", "line_shift", "decimal_swap", "future_date")
# corruption class -> normalizer able to invert it
NORMALIZER_FOR = {
    "char_substitution": "ocr_digits",
    "label_swap": "label_synonyms",
    "line_shift": "roi_shift",
    "decimal_swap": "decimal_separator",
}
NORMALIZERS = frozenset({"ocr_digits", "label_synonyms", "roi_shift", "decimal_separator", "date", "currency", "amount"})


@dataclass(frozen=True)
class NoiseEvent:
    cls: str
    field: str
    reversible: bool
    detail: str = ""

    @property
    def normalizer(self) -> Optional[str]:
        return NORMALIZER_FOR.get(self.cls) if self.reversible else None

    def to_json(self) -> dict[str, Any]:
        return {"cls": self.cls, "field": self.field, "reversible": self.reversible, "detail": self.detail}

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "NoiseEvent":
        return cls(data["cls"], data["field"], bool(data["reversible"]), data.get("detail", ""))


@dataclass(frozen=True)
class SyntheticDocument:
    lines: tuple[str, ...]
    line_items: tuple[tuple[str, Decimal], ...] = ()
    # ground-truth side channel; the parser never reads it
    noise_meta: tuple[NoiseEvent, ...] = ()

    def __post_init__(self) -> None:
        for ev in self.noise_meta:
            if ev.reversible and ev.normalizer is None:
                raise ValueError(f"reversible corruption {ev.cls} on {ev.field} has no normalizer")

    def to_text(self) -> str:
        return "\n".join(self.lines) + "\n"

    @classmethod
    def from_text(cls, text: str, noise_meta: tuple[NoiseEvent, ...] = ()) -> "SyntheticDocument":
        lines = tuple(text.rstrip("\n").split("\n"))
        items = []
        for line in lines:
            label, _, rest = line.partition(":")
            if label.strip() == ITEM_LABEL and "|" in rest:
                desc, _, amount = rest.rpartition("|")
                try:
                    items.append((desc.strip(), Decimal(amount.strip())))
                except ArithmeticError:
                    pass
        return cls(lines, tuple(items), noise_meta)


@dataclass(frozen=True)
class ExtractedInvoice:
    invoice_number: Optional[str] = None
    issue_date: Optional[date] = None
    due_date: Optional[date] = None
    payment_date: Optional[date] = None
    vendor: Optional[str] = None
    total: Optional[Decimal] = None
    currency: Optional[str] = None
    line_items: tuple[Decimal, ...] = ()
    confidence: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in self.present_fields():
            if name not in self.confidence:
                raise ValueError(f"present field {name} lacks a confidence entry")
        if self.total is not None and (self.total < 0 or self.total.as_tuple().exponent < -2):
            raise ValueError(f"total {self.total} must be non-negative with at most 2 decimals")

    def present_fields(self) -> tuple[str, ...]:
        return tuple(f for f in FIELDS if getattr(self, f) is not None)

    def get(self, name: str) -> Any:
        return getattr(self, name)

    def min_confidence(self) -> float:
        vals = [self.confidence[f] for f in self.present_fields()]
        return min(vals) if vals else 0.0

    def type_signatures(self) -> dict[str, str]:
        kinds = {"issue_date": "date", "due_date": "date", "payment_date": "date", "total": "decimal", "currency": "iso4217"}
        return {f: kinds.get(f, "string") for f in self.present_fields()}

    def fields_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in FIELDS:
            v = getattr(self, f)
            out[f] = None if v is None else (v.isoformat() if isinstance(v, date) else str(v))
        return out

    def to_json(self) -> dict[str, Any]:
        return {
            "fields": self.fields_json(),
            "confidence": {f: self.confidence[f] for f in self.present_fields()},
            "line_items": [str(a) for a in self.line_items],
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "ExtractedInvoice":
        return cls(**_fields_from_json(data))


def _fields_from_json(data: Mapping[str, Any]) -> dict[str, Any]:
    raw = data["fields"]
    kwargs: dict[str, Any] = {}
    for f in FIELDS:
        v = raw.get(f)
        if v is None:
            continue
        if f in DATE_FIELDS:
            v = date.fromisoformat(v)
        elif f == "total":
            v = Decimal(v)
        kwargs[f] = v
    kwargs["line_items"] = tuple(Decimal(a) for a in data.get("line_items", ()))
    kwargs["confidence"] = dict(data.get("confidence", {}))
    return kwargs


@dataclass(frozen=True)
class InvoiceFacts:
    """True field values of one generated invoice."""

    invoice_number: str
    vendor: str
    issue_date: date
    due_date: date
    currency: str
    line_items: tuple[tuple[str, Decimal], ...]

    @property
    def total(self) -> Decimal:
        return sum((a for _, a in self.line_items), Decimal("0.00"))

    def to_json(self) -> dict[str, Any]:
        return {
            "invoice_number": self.invoice_number,
            "vendor": self.vendor,
            "issue_date": self.issue_date.isoformat(),
            "due_date": self.due_date.isoformat(),
            "currency": self.currency,
            "total": str(self.total),
            "line_items": [[d, str(a)] for d, a in self.line_items],
        }


def render(facts: InvoiceFacts) -> SyntheticDocument:
    lines = [
        "INVOICE",
        f"{LABELS['invoice_number']}: {facts.invoice_number}",
        f"{LABELS['vendor']}: {facts.vendor}",
        f"{LABELS['issue_date']}: {facts.issue_date.isoformat()}",
        f"{LABELS['due_date']}: {facts.due_date.isoformat()}",
        f"{LABELS['currency']}: {facts.currency}",
    ]
    lines += [f"{ITEM_LABEL}: {desc} | {amount}" for desc, amount in facts.line_items]
    lines.append(f"{LABELS['total']}: {facts.total}")
    return SyntheticDocument(tuple(lines), facts.line_items)


def find_label_line(lines: tuple[str, ...] | list[str], name: str) -> Optional[int]:
    wanted = {LABELS[name].casefold(), *(s.casefold() for s in LABEL_SYNONYMS[name])}
    for i, line in enumerate(lines):
        label, sep, _ = line.partition(":")
        if sep and label.strip().casefold() in wanted:
            return i
    return None


def _set_value(lines: list[str], idx: int, value: str) -> None:
    label, _, _ = lines[idx].partition(":")
    lines[idx] = f"{label}: {value}"


def _line_value(lines: list[str], idx: int) -> str:
    return lines[idx].partition(":")[2].strip()


# Corruptions operate on a mutable line list and return the NoiseEvent applied,
# or None when the field offers nothing to corrupt.


def corrupt_char_substitution(lines: list[str], name: str, rng: random.Random) -> Optional[NoiseEvent]:
    idx = find_label_line(lines, name)
    if idx is None:
        return None
    value = _line_value(lines, idx)
    if not value:
        return None
    if name == "vendor":
        # vendor glyphs are destroyed outright; nothing can invert this
        chars = list(value)
        letters = [i for i, c in enumerate(chars) if c.isalnum()]
        for i in rng.sample(letters, max(1, (len(letters) * 2) // 5)):
            chars[i] = "#"
        _set_value(lines, idx, "".join(chars))
        return NoiseEvent("char_substitution", name, False, "illegible glyphs")
    start = 4 if name == "invoice_number" else 0
    candidates = [i for i, c in enumerate(value) if i >= start and c in OCR_GLYPHS]
    if not candidates:
        return None
    pos = rng.choice(candidates)
    new = value[:pos] + OCR_GLYPHS[value[pos]] + value[pos + 1 :]
    _set_value(lines, idx, new)
    return NoiseEvent("char_substitution", name, True, f"{value[pos]}->{OCR_GLYPHS[value[pos]]}@{pos}")


def corrupt_label_swap(lines: list[str], name: str, rng: random.Random) -> Optional[NoiseEvent]:
    idx = find_label_line(lines, name)
    if idx is None:
        return None
    label, _, rest = lines[idx].partition(":")
    if label.strip() != LABELS[name]:
        return None
    synonym = rng.choice(LABEL_SYNONYMS[name])
    lines[idx] = f"{synonym}:{rest}"
    return NoiseEvent("label_swap", name, True, synonym)


def corrupt_line_shift(lines: list[str], name: str, rng: random.Random) -> Optional[NoiseEvent]:
    idx = find_label_line(lines, name)
    if idx is None:
        return None
    value = _line_value(lines, idx)
    if not value:
        return None
    shift = rng.choice((1, 2))
    label = lines[idx].partition(":")[0]
    lines[idx] = f"{label}:"
    lines.insert(min(idx + shift, len(lines)), value)
    return NoiseEvent("line_shift", name, True, f"+{shift}")


def corrupt_decimal_swap(lines: list[str], name: str, rng: random.Random) -> Optional[NoiseEvent]:
    idx = find_label_line(lines, name)
    if idx is None:
        return None
    value = _line_value(lines, idx)
    if "." not in value:
        return None
    whole, _, frac = value.partition(".")
    if len(whole) > 3 and rng.random() < 0.5:
        groups = []
        while len(whole) > 3:
            groups.insert(0, whole[-3:])
            whole = whole[:-3]
        groups.insert(0, whole)
        new = ".".join(groups) + "," + frac
    else:
        new = whole + "," + frac
    _set_value(lines, idx, new)
    return NoiseEvent("decimal_swap", name, True, new)


def corrupt_future_date(lines: list[str], today: date, rng: random.Random) -> Optional[NoiseEvent]:
    issue_idx = find_label_line(lines, "issue_date")
    due_idx = find_label_line(lines, "due_date")
    if issue_idx is None or due_idx is None:
        return None
    ahead = rng.randint(5, 40)
    issue = today + timedelta(days=ahead)
    _set_value(lines, issue_idx, issue.isoformat())
    _set_value(lines, due_idx, (issue + timedelta(days=30)).isoformat())
    # content-level change: the dates stay well-formed, only the calendar check sees it
    return NoiseEvent("future_date", "issue_date", False, f"+{ahead}d")


def with_lines(doc: SyntheticDocument, lines: list[str], events: list[NoiseEvent]) -> SyntheticDocument:
    return replace(doc, lines=tuple(lines), noise_meta=doc.noise_meta + tuple(events))
