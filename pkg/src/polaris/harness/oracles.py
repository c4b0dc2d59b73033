"""Generation-time oracles, written independently of the engine's detectors.

These recompute ground truth with the most direct procedure available (full
sort, explicit loops) so the tests compare two separate routes to one answer.
"""

from __future__ import annotations

from datetime import date, timedelta
from decimal import Decimal
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

ORACLE_SCALE = Fraction(14826, 10000)


def sorted_median(values: Sequence[Fraction]) -> Fraction:
    xs = sorted(values)
    n = len(xs)
    if n == 0:
        raise ValueError("median of nothing")
    mid = n // 2
    if n % 2:
        return xs[mid]
    return (xs[mid - 1] + xs[mid]) / 2


def oracle_z(x: Decimal | float | int, history: Iterable[Decimal | float | int]) -> Optional[float]:
    """Exact rational z-score; None when MAD is zero."""
    hs = [Fraction(str(h)) for h in history]
    fx = Fraction(str(x))
    med = sorted_median(hs)
    mad = sorted_median([abs(h - med) for h in hs])
    if mad == 0:
        return None
    return float(abs(fx - med) / (ORACLE_SCALE * mad))


def oracle_history(
    vendor: Optional[str],
    vendor_histories: Mapping[str, Sequence[Decimal]],
    cohort_histories: Mapping[tuple[str, str], Sequence[Decimal]],
    global_history: Sequence[Decimal],
    vendor_cohort: Mapping[str, tuple[str, str]],
    n_min: int,
) -> tuple[str, list[Decimal]]:
    """Fallback chain vendor -> cohort -> global, each tier needing n_min points and MAD > 0."""

    def usable(hist: Sequence[Decimal]) -> bool:
        if len(hist) < n_min:
            return False
        hs = [Fraction(str(h)) for h in hist]
        med = sorted_median(hs)
        return sorted_median([abs(h - med) for h in hs]) != 0

    key = " ".join(vendor.split()).casefold() if vendor else None
    if key is not None and usable(vendor_histories.get(key, [])):
        return "vendor", list(vendor_histories[key])
    cohort = vendor_cohort.get(key) if key is not None else None
    if cohort is not None and usable(cohort_histories.get(cohort, [])):
        return "cohort", list(cohort_histories[cohort])
    return "global", list(global_history)


def oracle_amount_anomaly(x: Decimal, source_history: Sequence[Decimal], k_mad: float) -> bool:
    z = oracle_z(x, source_history)
    return z is not None and z > k_mad


def oracle_future_dates(dates: Iterable[Optional[date]], today: date) -> bool:
    return any(d is not None and (d - today) >= timedelta(days=1) for d in dates)


def oracle_violations(
    vendor_known: bool,
    blacklisted: bool,
    total: Decimal,
    threshold: Optional[Decimal],
    currency: str,
    policy_currency: Optional[str],
    has_approval: bool,
    duplicate_days: Optional[int],
    lookback_days: int,
) -> set[str]:
    """Violation kinds for one invoice, by direct case analysis."""
    out: set[str] = set()
    if not vendor_known:
        out.add("unknown_vendor")
    else:
        if threshold is not None and total > threshold and not has_approval:
            out.add("threshold_breach")
        if currency != policy_currency:
            out.add("currency_mismatch")
    if duplicate_days is not None and duplicate_days <= lookback_days:
        out.add("duplicate")
    if blacklisted:
        out.add("blacklisted")
    return out
