"""Trace replay and audit checks over recorded executions."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping, Optional

from ..contracts import Registry
from .pipeline import DocumentRun, replay_matches, replay_trace

SIDE_EFFECT_AGENTS = frozenset({"APIAccess", "Scheduler", "Approval"})


def load_trace(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text())


def replay_file(path: str | Path, registry: Optional[Registry] = None) -> tuple[bool, list[str], DocumentRun]:
    trace = load_trace(path)
    ok, diffs = replay_matches(trace, registry)
    return ok, diffs, replay_trace(trace, registry)


def audit_trace(trace: Mapping[str, Any]) -> list[str]:
    """Governance breaches visible in one trace; empty when the trace is clean."""
    problems = []
    execution = trace.get("execution", {})
    nodes = trace.get("executed_graph", {}).get("nodes", {})
    dispatched = {ev["node"] for ev in trace.get("events", ()) if ev["phase"] == "dispatched"}
    for check in execution.get("gate_checks", ()):
        if check["blocking"] and check["node"] in dispatched:
            problems.append(f"side effect {check['node']} dispatched with blocking {check['blocking']}")
    gated = {c["node"] for c in execution.get("gate_checks", ())}
    for node in dispatched:
        if nodes.get(node) in SIDE_EFFECT_AGENTS and node not in gated:
            problems.append(f"side effect {node} dispatched without a gate check")
    fallback = any(
        isinstance(v, dict) and v.get("fallback") is True for v in execution.get("value_store", {}).values()
    )
    if fallback and trace.get("decision", {}).get("decision") == "approve":
        problems.append("approve decision alongside a fallback extraction")
    for ev in trace.get("events", ()):
        if ev["phase"] == "dispatched" and ev.get("inputs") is None:
            problems.append(f"node {ev['node']} dispatched without an input snapshot")
    completed = {ev["node"] for ev in trace.get("events", ()) if ev["phase"] in ("completed", "failed")}
    for node in dispatched - completed:
        problems.append(f"node {node} has no completion record")
    return problems


def scheduler_precedes_report(trace: Mapping[str, Any]) -> bool:
    """Scheduler completes before any ReportGenerator dispatch."""
    events = trace.get("events", ())
    done = [i for i, ev in enumerate(events) if ev["agent"] == "Scheduler" and ev["phase"] == "completed"]
    started = [i for i, ev in enumerate(events) if ev["agent"] == "ReportGenerator" and ev["phase"] == "dispatched"]
    return bool(done) and bool(started) and max(done) < min(started)
