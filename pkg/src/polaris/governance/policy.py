"""Vendor policy store and the compiled violation predicates."""

from __future__ import annotations

import csv
import threading
from dataclasses import dataclass, field
from datetime import date, timedelta
from decimal import Decimal
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

from ..contracts import ISO_4217

VIOLATION_KINDS = (
    "unknown_vendor",
    "threshold_breach",
    "currency_mismatch",
    "duplicate",
    "blacklisted",
    "missing_provenance",
)
BLOCKING_KINDS = frozenset({"unknown_vendor", "blacklisted", "threshold_breach"})
PROVENANCE_ARTIFACTS = ("po", "receipt", "approval")


def vendor_key(name: str) -> str:
    return " ".join(name.split()).casefold()


@dataclass(frozen=True)
class PolicyRecord:
    vendor: str
    threshold: Decimal
    currency: str
    terms: str = ""
    sector: str = ""

    def __post_init__(self) -> None:
        if self.threshold <= 0:
            raise ValueError(f"{self.vendor}: threshold must be positive")
        if self.currency not in ISO_4217:
            raise ValueError(f"{self.vendor}: {self.currency!r} is not ISO-4217")

    def to_json(self) -> dict[str, Any]:
        return {
            "vendor": self.vendor,
            "threshold": str(self.threshold),
            "currency": self.currency,
            "terms": self.terms,
            "sector": self.sector,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "PolicyRecord":
        return cls(data["vendor"], Decimal(str(data["threshold"])), data["currency"], data.get("terms", ""), data.get("sector", ""))


@dataclass(frozen=True)
class HistoryEntry:
    vendor: str
    invoice_number: str
    timestamp: date

    def to_json(self) -> dict[str, Any]:
        return {"vendor": self.vendor, "invoice_number": self.invoice_number, "timestamp": self.timestamp.isoformat()}


class PolicyStore:
    """Policy records keyed by canonical vendor name, indexed by sector and currency."""

    def __init__(
        self,
        records: Iterable[PolicyRecord] = (),
        blacklist: Iterable[str] = (),
        whitelist: Iterable[str] = (),
        history: Iterable[HistoryEntry] = (),
    ):
        self._records: dict[str, PolicyRecord] = {}
        self.by_sector: dict[str, list[str]] = {}
        self.by_currency: dict[str, list[str]] = {}
        for rec in records:
            self.add(rec)
        self.blacklist = frozenset(vendor_key(v) for v in blacklist)
        self.whitelist = frozenset(vendor_key(v) for v in whitelist)
        overlap = self.blacklist & self.whitelist
        if overlap:
            raise ValueError(f"vendors both black- and whitelisted: {sorted(overlap)}")
        self.history: list[HistoryEntry] = list(history)
        self._lock = threading.Lock()

    def add(self, rec: PolicyRecord) -> None:
        key = vendor_key(rec.vendor)
        if key in self._records:
            raise ValueError(f"duplicate policy record for {rec.vendor}")
        self._records[key] = rec
        self.by_sector.setdefault(rec.sector, []).append(key)
        self.by_currency.setdefault(rec.currency, []).append(key)

    def get(self, vendor: str) -> Optional[PolicyRecord]:
        return self._records.get(vendor_key(vendor))

    def vendors(self) -> list[str]:
        return [r.vendor for r in self._records.values()]

    def records(self) -> list[PolicyRecord]:
        return list(self._records.values())

    def __contains__(self, vendor: str) -> bool:
        return vendor_key(vendor) in self._records

    def __len__(self) -> int:
        return len(self._records)

    def record_history(self, entries: Iterable[HistoryEntry]) -> None:
        # single writer commit point; readers use snapshots taken before a batch
        with self._lock:
            self.history.extend(entries)

    def to_json(self) -> dict[str, Any]:
        return {
            "records": [r.to_json() for r in self._records.values()],
            "blacklist": sorted(self.blacklist),
            "whitelist": sorted(self.whitelist),
            "history": [h.to_json() for h in self.history],
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "PolicyStore":
        return cls(
            (PolicyRecord.from_json(r) for r in data["records"]),
            data.get("blacklist", ()),
            data.get("whitelist", ()),
            (HistoryEntry(h["vendor"], h["invoice_number"], date.fromisoformat(h["timestamp"])) for h in data.get("history", ())),
        )

    def snapshot(self) -> "PolicyStore":
        return PolicyStore.from_json(self.to_json())

    @classmethod
    def load(
        cls,
        table: str | Path,
        blacklist: str | Path | None = None,
        whitelist: str | Path | None = None,
    ) -> "PolicyStore":
        with open(table, newline="") as fh:
            rows = list(csv.DictReader(fh))
        records = [
            PolicyRecord(r["vendor"].strip(), Decimal(r["threshold"]), r["currency"].strip(), r.get("terms", "").strip(), r.get("sector", "").strip())
            for r in rows
        ]
        return cls(records, _read_lines(blacklist), _read_lines(whitelist))

    def save(self, table: str | Path, blacklist: str | Path | None = None, whitelist: str | Path | None = None) -> None:
        with open(table, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["vendor", "sector", "currency", "threshold", "terms"])
            for r in self._records.values():
                writer.writerow([r.vendor, r.sector, r.currency, str(r.threshold), r.terms])
        if blacklist is not None:
            Path(blacklist).write_text("".join(f"{v}\n" for v in sorted(self.blacklist)))
        if whitelist is not None:
            Path(whitelist).write_text("".join(f"{v}\n" for v in sorted(self.whitelist)))


def _read_lines(path: str | Path | None) -> list[str]:
    if path is None or not Path(path).exists():
        return []
    return [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]


@dataclass(frozen=True)
class PolicyLookup:
    exists: bool
    matched_vendor: Optional[str] = None
    record: Optional[PolicyRecord] = None
    evidence: str = ""

    def to_json(self) -> dict[str, Any]:
        return {
            "exists": self.exists,
            "matched_vendor": self.matched_vendor,
            "record": self.record.to_json() if self.record else None,
            "evidence": self.evidence,
        }


def retrieve_policy(vendor_name: Optional[str], store: PolicyStore) -> PolicyLookup:
    """Exact canonical match after case and whitespace folding; no fuzzy matching."""
    if not vendor_name or not vendor_name.strip():
        return PolicyLookup(False, evidence="empty_query")
    rec = store.get(vendor_name)
    if rec is None:
        return PolicyLookup(False, evidence="no_record")
    return PolicyLookup(True, rec.vendor, rec, "exact_match")


@dataclass(frozen=True)
class Violation:
    kind: str
    evidence: Mapping[str, str] = field(default_factory=dict)
    blocking: bool = False

    def __post_init__(self) -> None:
        if self.kind not in VIOLATION_KINDS:
            raise ValueError(f"unknown violation kind {self.kind!r}")
        if self.kind == "threshold_breach" and not {"amount", "threshold", "approval_artifact"} <= set(self.evidence):
            raise ValueError("threshold_breach evidence needs amount, threshold and approval_artifact")

    def to_json(self) -> dict[str, Any]:
        return {"kind": self.kind, "evidence": dict(sorted(self.evidence.items())), "blocking": self.blocking}

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "Violation":
        return cls(data["kind"], dict(data["evidence"]), bool(data["blocking"]))


def _violation(kind: str, **evidence: Any) -> Violation:
    return Violation(kind, {k: str(v) for k, v in evidence.items()}, kind in BLOCKING_KINDS)


def check_violations(
    inv: Any,
    lookup: PolicyLookup,
    approvals: Iterable[str],
    store: PolicyStore,
    today: date,
    *,
    lookback_days: int = 90,
    enforce_provenance: bool = False,
) -> list[Violation]:
    """Evaluate every policy predicate; pure in its arguments."""
    approvals = frozenset(a.lower() for a in approvals)
    found: list[Violation] = []
    vendor = inv.vendor or ""
    if not lookup.exists:
        found.append(_violation("unknown_vendor", vendor=vendor or "<missing>", lookup=lookup.evidence))
    else:
        rec = lookup.record
        assert rec is not None
        if inv.total is not None and inv.total > rec.threshold and "approval" not in approvals:
            found.append(
                _violation("threshold_breach", amount=inv.total, threshold=rec.threshold, approval_artifact="absent")
            )
        if inv.currency != rec.currency:
            found.append(_violation("currency_mismatch", invoice_currency=inv.currency or "<missing>", policy_currency=rec.currency))
    if vendor and inv.invoice_number:
        key = vendor_key(vendor)
        window = timedelta(days=lookback_days)
        stamp = inv.issue_date or today
        for h in store.history:
            if vendor_key(h.vendor) == key and h.invoice_number == inv.invoice_number and abs(stamp - h.timestamp) <= window:
                found.append(_violation("duplicate", invoice_number=inv.invoice_number, previous=h.timestamp.isoformat()))
                break
    if vendor and vendor_key(vendor) in store.blacklist:
        found.append(_violation("blacklisted", vendor=vendor))
    if enforce_provenance:
        missing = [a for a in PROVENANCE_ARTIFACTS if a not in approvals]
        if missing:
            found.append(_violation("missing_provenance", missing=",".join(missing)))
    return found
