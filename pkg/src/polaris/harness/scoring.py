"""Per-scenario metric tables for extraction, policy and anomaly routing."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date
from decimal import Decimal, InvalidOperation
from typing import Any, Iterable, Mapping, Optional, Sequence

from ..extraction.documents import REQUIRED_FIELDS
from ..governance import ConfusionCounts, fmt_metric, score_confusion, vendor_key
from .suite import GroundTruth

ROW_ORDER = ("VU", "VL", "CC", "CM")
TOTAL_ROW = "TOTAL"
TABLES = ("extraction", "policy", "anomaly")


def _same(name: str, got: Any, want: Optional[str]) -> bool:
    if want is None:
        return got is None
    if name == "total":
        try:
            return Decimal(str(got)) == Decimal(want)
        except InvalidOperation:
            return False
    if name.endswith("_date"):
        return (got.isoformat() if isinstance(got, date) else str(got)) == want
    if name == "vendor":
        return vendor_key(str(got)) == vendor_key(want)
    return str(got).strip() == want


def extraction_counts(extracted: Mapping[str, Any], truth: Mapping[str, Optional[str]]) -> ConfusionCounts:
    """Field-level counts over the required fields.

    TP: extracted and equal to truth. FP: extracted but wrong. FN: truth
    present, nothing extracted. TN: truth marks the field absent and nothing
    was extracted.
    """
    tp = fp = fn = tn = 0
    for name in REQUIRED_FIELDS:
        got = extracted.get(name)
        want = truth.get(name)
        if got is None:
            if want is None:
                tn += 1
            else:
                fn += 1
        elif _same(name, got, want):
            tp += 1
        else:
            fp += 1
    return ConfusionCounts(tp, fp, fn, tn)


def label_counts(predicted: Iterable[tuple[str, str]], truth: Iterable[tuple[str, str]], invoices: Iterable[str]) -> ConfusionCounts:
    """(invoice, kind) label agreement; TN counts invoices with no label on either side."""
    pred, true = set(predicted), set(truth)
    counts = score_confusion(pred, true)
    touched = {i for i, _ in pred | true}
    clean = sum(1 for i in set(invoices) if i not in touched)
    return ConfusionCounts(counts.tp, counts.fp, counts.fn, clean)


@dataclass(frozen=True)
class ScenarioScores:
    scenario: str
    extraction: ConfusionCounts
    policy: ConfusionCounts
    anomaly: ConfusionCounts

    def table(self, name: str) -> ConfusionCounts:
        return getattr(self, name)


def score_run(scenario: str, predictions: Sequence[Mapping[str, Any]], truth: GroundTruth) -> ScenarioScores:
    """Score predictions of the shape {invoice_id, fields, violations, anomalies}."""
    by_id = truth.by_id()
    ext = ConfusionCounts(0, 0, 0, 0)
    pol_pred: set[tuple[str, str]] = set()
    an_pred: set[tuple[str, str]] = set()
    for p in predictions:
        t = by_id[p["invoice_id"]]
        ext = ext + extraction_counts(p.get("fields") or {}, t.fields)
        pol_pred |= {(p["invoice_id"], k) for k in p.get("violations", ())}
        an_pred |= {(p["invoice_id"], k) for k in p.get("anomalies", ())}
    ids = [p["invoice_id"] for p in predictions]
    true_pol = {(i, k) for i, k in truth.violation_labels() if i in ids}
    true_an = {(i, k) for i, k in truth.anomaly_labels() if i in ids}
    return ScenarioScores(scenario, ext, label_counts(pol_pred, true_pol, ids), label_counts(an_pred, true_an, ids))


def total_row(scores: Iterable[ScenarioScores]) -> ScenarioScores:
    zero = ConfusionCounts(0, 0, 0, 0)
    ext, pol, an = zero, zero, zero
    for s in scores:
        ext, pol, an = ext + s.extraction, pol + s.policy, an + s.anomaly
    return ScenarioScores(TOTAL_ROW, ext, pol, an)


def ordered(scores: Iterable[ScenarioScores]) -> list[ScenarioScores]:
    by = {s.scenario: s for s in scores}
    rows = [by[k] for k in ROW_ORDER if k in by]
    rows += [s for k, s in sorted(by.items()) if k not in ROW_ORDER and k != TOTAL_ROW]
    return rows + [total_row(rows)]


def table_rows(name: str, scores: Iterable[ScenarioScores]) -> list[dict[str, Any]]:
    rows = []
    for s in ordered(scores):
        c = s.table(name)
        row: dict[str, Any] = {"scenario": s.scenario}
        if name == "policy":
            row.update({"TPV": c.tp, "FPV": c.fp, "FNV": c.fn, "TNV": c.tn})
        else:
            row.update({"total": c.tp + c.fp + c.fn + c.tn, "TP": c.tp, "FP": c.fp, "FN": c.fn, "TN": c.tn})
        row.update({"precision": c.precision, "recall": c.recall, "f1": c.f1})
        rows.append(row)
    return rows


def format_table(name: str, scores: Iterable[ScenarioScores]) -> str:
    rows = table_rows(name, scores)
    headers = list(rows[0])
    cells = [[str(r[h]) if h not in ("precision", "recall", "f1") else fmt_metric(r[h]) for h in headers] for r in rows]
    widths = [max(len(h), *(len(c[i]) for c in cells)) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) if i == 0 else h.rjust(w) for i, (h, w) in enumerate(zip(headers, widths)))]
    lines.append("  ".join("-" * w for w in widths))
    for c in cells:
        lines.append("  ".join(v.ljust(w) if i == 0 else v.rjust(w) for i, (v, w) in enumerate(zip(c, widths))))
    return f"{name}\n" + "\n".join(lines) + "\n"
