"""Robust (median absolute deviation) anomaly scoring with baseline fallback."""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from datetime import date
from decimal import Decimal
from typing import Any, Iterable, Mapping, Optional, Sequence

from .policy import vendor_key

MAD_SCALE = 1.4826


class EmptyHistoryError(ValueError):
    pass


def _median(values: Sequence[float]) -> float:
    # statistics.median averages the two middles for even counts
    return float(statistics.median(values))


def z_mad(x: Decimal | float, history: Sequence[Decimal | float]) -> Optional[float]:
    """Robust z-score of ``x`` against ``history``; None when MAD is zero."""
    if not history:
        raise EmptyHistoryError("z_mad needs a non-empty history")
    xs = [float(h) for h in history]
    med = _median(xs)
    mad = _median([abs(h - med) for h in xs])
    if mad == 0:
        return None
    return abs(float(x) - med) / (MAD_SCALE * mad)


@dataclass
class AnomalyBaseline:
    vendor_histories: dict[str, list[Decimal]] = field(default_factory=dict)
    cohort_histories: dict[tuple[str, str], list[Decimal]] = field(default_factory=dict)
    global_history: list[Decimal] = field(default_factory=list)
    # vendor key -> (sector, currency); cohort membership needs both to match
    vendor_cohort: dict[str, tuple[str, str]] = field(default_factory=dict)
    n_min: int = 5

    def vendor_history(self, vendor: Optional[str]) -> list[Decimal]:
        if not vendor:
            return []
        return self.vendor_histories.get(vendor_key(vendor), [])

    def cohort_of(self, vendor: Optional[str]) -> Optional[tuple[str, str]]:
        if not vendor:
            return None
        return self.vendor_cohort.get(vendor_key(vendor))

    def append(self, vendor: Optional[str], amount: Decimal) -> None:
        key = vendor_key(vendor) if vendor else None
        if key is not None:
            self.vendor_histories.setdefault(key, []).append(amount)
            cohort = self.vendor_cohort.get(key)
            if cohort is not None:
                self.cohort_histories.setdefault(cohort, []).append(amount)
        self.global_history.append(amount)

    def size(self) -> int:
        return len(self.global_history)

    def copy(self) -> "AnomalyBaseline":
        return AnomalyBaseline.from_json(self.to_json())

    def to_json(self) -> dict[str, Any]:
        return {
            "vendor_histories": {k: [str(a) for a in v] for k, v in sorted(self.vendor_histories.items())},
            "cohort_histories": [
                {"sector": s, "currency": c, "amounts": [str(a) for a in v]}
                for (s, c), v in sorted(self.cohort_histories.items())
            ],
            "global_history": [str(a) for a in self.global_history],
            "vendor_cohort": {k: list(v) for k, v in sorted(self.vendor_cohort.items())},
            "n_min": self.n_min,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "AnomalyBaseline":
        return cls(
            {k: [Decimal(a) for a in v] for k, v in data["vendor_histories"].items()},
            {(c["sector"], c["currency"]): [Decimal(a) for a in c["amounts"]] for c in data["cohort_histories"]},
            [Decimal(a) for a in data["global_history"]],
            {k: (v[0], v[1]) for k, v in data["vendor_cohort"].items()},
            int(data["n_min"]),
        )

    @classmethod
    def build(
        cls,
        samples: Iterable[tuple[str, Decimal]],
        vendor_cohort: Mapping[str, tuple[str, str]],
        n_min: int = 5,
    ) -> "AnomalyBaseline":
        base = cls(vendor_cohort={vendor_key(k): v for k, v in vendor_cohort.items()}, n_min=n_min)
        for vendor, amount in samples:
            base.append(vendor, amount)
        return base


@dataclass(frozen=True)
class AnomalyFlag:
    kind: str  # amount | date
    field: str
    value: str
    score: Optional[float]
    source: str  # vendor | cohort | global | calendar

    @property
    def rule(self) -> str:
        return f"{self.kind}_anomaly"

    def to_json(self) -> dict[str, Any]:
        return {"kind": self.kind, "field": self.field, "value": self.value, "score": self.score, "source": self.source}

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "AnomalyFlag":
        return cls(data["kind"], data["field"], data["value"], data["score"], data["source"])


def select_history(vendor: Optional[str], baseline: AnomalyBaseline) -> tuple[str, list[Decimal]]:
    """Pick the first usable history: vendor, then cohort, then global."""
    hist = baseline.vendor_history(vendor)
    if len(hist) >= baseline.n_min and z_mad(hist[0], hist) is not None:
        return "vendor", hist
    cohort = baseline.cohort_of(vendor)
    if cohort is not None:
        hist = baseline.cohort_histories.get(cohort, [])
        if len(hist) >= baseline.n_min and z_mad(hist[0], hist) is not None:
            return "cohort", hist
    return "global", baseline.global_history


def amount_score(inv: Any, baseline: AnomalyBaseline) -> tuple[str, Optional[float]]:
    source, hist = select_history(inv.vendor, baseline)
    if not hist:
        return source, None
    return source, z_mad(inv.total, hist)


def detect_anomalies(inv: Any, baseline: AnomalyBaseline, k_mad: float, today: date) -> list[AnomalyFlag]:
    if k_mad <= 0:
        raise ValueError("k_mad must be positive")
    flags: list[AnomalyFlag] = []
    if inv.total is not None:
        source, z = amount_score(inv, baseline)
        if z is not None and z > k_mad:
            flags.append(AnomalyFlag("amount", "total", str(inv.total), round(z, 6), source))
    for name in ("issue_date", "due_date", "payment_date"):
        value = getattr(inv, name, None)
        if value is not None and value > today:
            flags.append(AnomalyFlag("date", name, value.isoformat(), None, "calendar"))
    return flags


def max_amount_z(flags: Iterable[AnomalyFlag]) -> float:
    return max((f.score or 0.0 for f in flags if f.kind == "amount"), default=0.0)
