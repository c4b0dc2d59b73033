"""Per-scenario outcome checks used by ``polaris eval``."""

from __future__ import annotations

from typing import Any, Mapping, Sequence

from .replay import audit_trace, scheduler_precedes_report
from .scoring import ScenarioScores


def _perfect(name: str, counts: Any) -> list[str]:
    if counts.defined and (counts.precision != 1.0 or counts.recall != 1.0):
        return [f"{name} precision/recall {counts.precision}/{counts.recall} below 1.0"]
    return []


def check_expectations(
    scores: ScenarioScores, predictions: Sequence[Mapping[str, Any]], traces: Sequence[Mapping[str, Any]]
) -> list[str]:
    """Failures of the scenario's designed outcome; empty when the run behaves as built."""
    s = scores.scenario
    failures: list[str] = []
    for t in traces:
        failures += [f"{t.get('inputs', {}).get('invoice_id', '?')}: {p}" for p in audit_trace(t)]
    if s in ("CC", "CM"):
        failures += _perfect("extraction", scores.extraction)
    if s == "CC":
        held = [p["invoice_id"] for p in predictions if p["decision"] != "approve"]
        if held:
            failures.append(f"clean invoices not approved: {held}")
    if s == "CM":
        late = [t.get("inputs", {}).get("invoice_id", "?") for t in traces if not scheduler_precedes_report(t)]
        if late:
            failures.append(f"report dispatched before scheduler completed: {late}")
    if s == "VU":
        failures += _perfect("policy", scores.policy)
        approved = [p["invoice_id"] for p in predictions if p["decision"] == "approve"]
        if approved:
            failures.append(f"unknown-vendor invoices approved: {approved}")
    if s in ("CM", "VL"):
        failures += _perfect("anomaly", scores.anomaly)
    return failures
