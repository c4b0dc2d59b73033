"""Run artifacts on disk: records, decisions, traces, events, tables, exemplar feedback."""

from __future__ import annotations

import json
from datetime import date
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

from ..extraction.documents import FIELDS
from ..serialization import to_jsonable
from .pipeline import DocumentRun, RunResult
from .scoring import TABLES, ScenarioScores, format_table, score_run, table_rows
from .suite import GroundTruth

FEEDBACK_FILE = "exemplar_feedback.jsonl"


def prediction(run: DocumentRun) -> dict[str, Any]:
    """What the engine concluded about one invoice, in the shape the scorer reads."""
    inv = run.invoice
    fields = {f: inv.get(f) for f in FIELDS} if inv is not None else {}
    verdict = run.verdict
    return {
        "invoice_id": run.inputs.invoice_id,
        "decision": run.decision.decision,
        "fields": to_jsonable(fields),
        "violations": sorted({v.kind for v in verdict.violations}) if verdict else [],
        "anomalies": sorted({a.kind for a in verdict.anomalies}) if verdict else [],
        "fallback": bool(getattr(inv, "fallback", False)),
    }


def _fields_from_json(fields: Mapping[str, Any]) -> dict[str, Any]:
    # the scorer compares parsed dates, so restore them from ISO strings
    out: dict[str, Any] = {}
    for k, v in fields.items():
        if v is not None and k.endswith("_date"):
            out[k] = date.fromisoformat(v)
        else:
            out[k] = v
    return out


def load_predictions(run_dir: str | Path) -> list[dict[str, Any]]:
    rows = []
    for line in (Path(run_dir) / "predictions.jsonl").read_text().splitlines():
        if line.strip():
            row = json.loads(line)
            row["fields"] = _fields_from_json(row.get("fields") or {})
            rows.append(row)
    return rows


def _write(path: Path, data: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(data), indent=2, sort_keys=True, ensure_ascii=False) + "\n")


def write_tables(out: str | Path, scores: Iterable[ScenarioScores]) -> str:
    scores = list(scores)
    text = "\n".join(format_table(name, scores) for name in TABLES)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "tables.txt").write_text(text)
    _write(out / "metrics.json", {name: table_rows(name, scores) for name in TABLES})
    return text


def emit_outputs(
    result: RunResult,
    out: str | Path,
    *,
    truth: Optional[GroundTruth] = None,
    trace_dir: str | Path | None = None,
    feedback_path: str | Path | None = None,
) -> Path:
    """Write every artifact of one scenario run; returns the run directory."""
    out = Path(out)
    traces = Path(trace_dir) if trace_dir is not None else out / "traces"
    for sub in ("records", "decisions"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    traces.mkdir(parents=True, exist_ok=True)
    preds = []
    with (out / "events.jsonl").open("w") as events:
        for r in result.runs:
            iid = r.inputs.invoice_id
            record = r.invoice.to_json() if r.invoice is not None else None
            _write(out / "records" / f"{iid}.json", record)
            _write(out / "decisions" / f"{iid}.json", r.decision.to_json())
            _write(traces / f"{iid}.json", r.trace)
            for ev in r.trace.get("events", ()):
                events.write(json.dumps({"invoice_id": iid, **ev}, sort_keys=True) + "\n")
            preds.append(prediction(r))
    with (out / "predictions.jsonl").open("w") as f:
        for p in preds:
            f.write(json.dumps(p, sort_keys=True) + "\n")
    _write(
        out / "run.json",
        {
            "scenario": result.scenario,
            "invoices": len(result.runs),
            "decisions": {d: sum(1 for r in result.runs if r.decision.decision == d) for d in ("approve", "hold", "reject")},
            "dispositions": [d.to_json() for d in result.dispositions],
            # relative when traces live under the run directory, so runs can move
            "trace_dir": str(traces.resolve().relative_to(out.resolve()) if traces.resolve().is_relative_to(out.resolve()) else traces.resolve()),
        },
    )
    if result.store is not None and result.baseline is not None:
        _write(out / "state" / "store.json", result.store.to_json())
        _write(out / "state" / "baseline.json", result.baseline.to_json())
    feedback = Path(feedback_path) if feedback_path is not None else out / FEEDBACK_FILE
    with feedback.open("a") as f:
        for line in result.feedback:
            f.write(line + "\n")
    if truth is not None:
        write_tables(out, [score_run(result.scenario, load_predictions(out), truth)])
    return out
