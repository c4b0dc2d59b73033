"""End-to-end document runs: normalize, plan, select, compile, execute, decide."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date
from decimal import Decimal
from typing import Any, Mapping, Optional, Sequence

from .. import __version__
from ..agents import AgentContext, Decision, collect_findings, decide, default_registry
from ..config import EngineConfig
from ..contracts import Registry
from ..executor import ExecutionState, Executor, compile_plan
from ..extraction.documents import NoiseEvent, SyntheticDocument
from ..extraction.validation import ValidatedInvoice
from ..governance import AnomalyBaseline, HistoryEntry, Playbook, PolicyStore, risk_assess
from ..planner import ExemplarBank, feedback_record, generate_candidates
from ..selector import select
from ..serialization import canonical_json, stable_digest, strip_timing, to_jsonable
from ..task_model import RawInput, TaskRecord, normalize
from .suite import Suite

DECISIONS = ("approve", "hold", "reject")


@dataclass(frozen=True)
class DecisionObject:
    decision: str
    rationale: tuple[str, ...]
    trace_id: str
    invoice_id: str = ""

    def __post_init__(self) -> None:
        if self.decision not in DECISIONS:
            raise ValueError(f"unknown decision {self.decision!r}")

    def to_json(self) -> dict[str, Any]:
        return {
            "decision": self.decision,
            "rationale": list(self.rationale),
            "trace_id": self.trace_id,
            "invoice_id": self.invoice_id,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "DecisionObject":
        return cls(data["decision"], tuple(data["rationale"]), data["trace_id"], data.get("invoice_id", ""))


@dataclass(frozen=True)
class DocumentInputs:
    """Everything one document run reads; a trace stores exactly this for replay."""

    invoice_id: str
    raw: RawInput
    doc: Optional[SyntheticDocument]
    store: PolicyStore
    baseline: AnomalyBaseline
    ledger: Mapping[str, tuple[str, Decimal]]
    approvals: frozenset[str]
    today: date
    cfg: EngineConfig
    bank: ExemplarBank

    def to_json(self) -> dict[str, Any]:
        return {
            "invoice_id": self.invoice_id,
            "raw": self.raw.to_json(),
            "document": None
            if self.doc is None
            else {"text": self.doc.to_text(), "noise": [e.to_json() for e in self.doc.noise_meta]},
            "store": self.store.to_json(),
            "baseline": self.baseline.to_json(),
            "ledger": {k: [v, str(a)] for k, (v, a) in sorted(self.ledger.items())},
            "approvals": sorted(self.approvals),
            "today": self.today.isoformat(),
            "config": to_jsonable(self.cfg.to_dict()),
            "exemplars": self.bank.to_json(),
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "DocumentInputs":
        d = data["document"]
        doc = None if d is None else SyntheticDocument.from_text(d["text"], tuple(NoiseEvent.from_json(e) for e in d["noise"]))
        return cls(
            data["invoice_id"],
            RawInput.from_json(data["raw"]),
            doc,
            PolicyStore.from_json(data["store"]),
            AnomalyBaseline.from_json(data["baseline"]),
            {k: (v, Decimal(a)) for k, (v, a) in data["ledger"].items()},
            frozenset(data["approvals"]),
            date.fromisoformat(data["today"]),
            EngineConfig.from_dict(data["config"]),
            ExemplarBank.from_json(data["exemplars"]),
        )


@dataclass
class DocumentRun:
    inputs: DocumentInputs
    decision: DecisionObject
    trace: dict[str, Any]
    task: Optional[TaskRecord] = None
    state: Optional[ExecutionState] = None
    invoice: Any = None
    # the Decision produced by Approval or by finalization; None after a failure
    verdict: Optional[Decision] = None
    plan: Any = None


@dataclass
class RunResult:
    scenario: str
    runs: list[DocumentRun]
    dispositions: list[Any] = field(default_factory=list)
    feedback: list[str] = field(default_factory=list)
    store: Optional[PolicyStore] = None
    baseline: Optional[AnomalyBaseline] = None

    @property
    def decisions(self) -> list[DecisionObject]:
        return [r.decision for r in self.runs]

    @property
    def traces(self) -> list[dict[str, Any]]:
        return [r.trace for r in self.runs]


def _trace_id(inputs: DocumentInputs) -> str:
    return stable_digest(inputs.to_json())


def _final_invoice(state: ExecutionState) -> Any:
    chosen = None
    for (node, slot), value in sorted(state.value_store.items()):
        if slot == "validated":
            return value
        if slot == "parsed":
            chosen = value
    return chosen


def _finalize(state: ExecutionState, task: TaskRecord, cfg: EngineConfig) -> Decision:
    done = {n: st for n, st in state.status.items() if st == "done"}
    for n in sorted(done):
        out = state.outputs_of(n).get("decision")
        if isinstance(out, Decision):
            return out
    values = {state.graph.nodes[n]: state.outputs_of(n) for n in sorted(done)}
    violations, anomalies = collect_findings(values)
    verification = values.get("ExtraVerification", {}).get("verification")
    invoice = _final_invoice(state)
    if not task.is_document_task:
        complete = all(st == "done" for st in state.status.values())
        assessment = risk_assess(violations, anomalies, cfg.rule_weights, (cfg.t_review, cfg.t_block))
        outcome = "approve" if complete and not violations and not anomalies else "hold"
        return Decision(outcome, (f"plan:{'complete' if complete else 'incomplete'}",), assessment, violations, anomalies)
    decision = decide(violations, anomalies, invoice, cfg, verification=verification, approval_ran=False)
    failed = sorted(n for n, st in state.status.items() if st == "failed")
    if failed and decision.decision == "approve":
        rationale = decision.rationale + tuple(f"node_failed:{n}" for n in failed)
        decision = Decision("hold", rationale, decision.assessment, decision.violations, decision.anomalies)
    return decision


def run_document(inputs: DocumentInputs, registry: Optional[Registry] = None, *, serial: bool = False) -> DocumentRun:
    """One document through the full loop; failures become hold decisions, never exceptions."""
    registry = registry or default_registry()
    cfg = inputs.cfg
    trace_id = _trace_id(inputs)
    trace: dict[str, Any] = {
        "trace_id": trace_id,
        "header": {"engine_version": __version__, "config": to_jsonable(cfg.to_dict())},
        "inputs": inputs.to_json(),
        "timings": {},
    }
    run = DocumentRun(inputs, DecisionObject("hold", ("pending",), trace_id, inputs.invoice_id), trace)
    stage = "normalize"
    try:
        task = normalize(inputs.raw)
        run.task = task
        trace["task"] = task.to_json()
        stage = "plan"
        candidates = generate_candidates(task, inputs.bank, registry, cfg.K, cfg)
        trace["candidates"] = [p.to_json() for p in candidates]
        stage = "select"
        selection = select(candidates, task, registry, cfg=cfg)
        trace["selection"] = selection.to_json()
        plan = candidates[selection.chosen_index]
        run.plan = plan
        stage = "compile"
        graph = compile_plan(plan, registry)
        trace["compiled"] = graph.to_json()
        stage = "execute"
        base_ctx = AgentContext(
            task=task,
            cfg=cfg,
            doc=inputs.doc,
            store=inputs.store,
            baseline=inputs.baseline,
            today=inputs.today,
            approvals=inputs.approvals,
            ledger=inputs.ledger,
            plan_agents=tuple(plan.agents()),
        )
        executor = Executor(registry, cfg.concurrency_limit, serial, lambda node, upstream: base_ctx.for_node(upstream))
        state, events = executor.run(graph, task)
        run.state = state
        trace["executed_graph"] = state.graph.to_json()
        trace["execution"] = state.to_json()
        trace["events"] = [e.to_json() for e in events]
        stage = "finalize"
        verdict = _finalize(state, task, cfg)
        invoice = _final_invoice(state)
        run.invoice = invoice
        run.verdict = verdict
        if isinstance(invoice, ValidatedInvoice) and invoice.repair is not None:
            trace["repair"] = to_jsonable(invoice.repair)
        trace["findings"] = {
            "violations": [v.to_json() for v in verdict.violations],
            "anomalies": [a.to_json() for a in verdict.anomalies],
            "risk": to_jsonable(verdict.assessment),
        }
        run.decision = DecisionObject(verdict.decision, tuple(verdict.rationale), trace_id, inputs.invoice_id)
    except Exception as exc:  # a bad document never aborts the batch
        trace["error"] = {"stage": stage, "message": f"{type(exc).__name__}: {exc}"}
        run.decision = DecisionObject("hold", (f"failure:{stage}:{type(exc).__name__}",), trace_id, inputs.invoice_id)
    trace["decision"] = run.decision.to_json()
    return run


def suite_inputs(
    suite: Suite, cfg: Optional[EngineConfig] = None, bank: Optional[ExemplarBank] = None
) -> list[DocumentInputs]:
    cfg = cfg or EngineConfig()
    bank = bank or ExemplarBank.load()
    # every document reads the same pre-batch snapshot
    store = suite.store.snapshot()
    baseline = suite.baseline.copy()
    return [
        DocumentInputs(it.invoice_id, it.raw, it.doc, store, baseline, suite.ledger, it.approvals, suite.run_date, cfg, bank)
        for it in suite.items
    ]


def run_batch(
    inputs: Sequence[DocumentInputs],
    scenario: str = "",
    registry: Optional[Registry] = None,
    *,
    jobs: int = 1,
    serial: bool = False,
) -> RunResult:
    """Run documents (optionally concurrently), then route and commit after the batch barrier."""
    registry = registry or default_registry()
    if jobs > 1 and not serial:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(lambda i: run_document(i, registry), inputs))
    else:
        runs = [run_document(i, registry, serial=serial) for i in inputs]

    result = RunResult(scenario, runs)
    if not inputs:
        return result
    store = inputs[0].store.snapshot()
    baseline = inputs[0].baseline.copy()
    playbook = Playbook(baseline)
    history = []
    for r in runs:
        inv = r.invoice
        if r.verdict is not None:
            record = store.get(inv.vendor) if inv is not None and inv.vendor else None
            disp = playbook.route(
                r.verdict.violations,
                r.verdict.anomalies,
                r.verdict.assessment,
                invoice_number=(inv.invoice_number if inv is not None else None) or r.inputs.invoice_id,
                vendor=inv.vendor if inv is not None else None,
                amount=inv.total if inv is not None else None,
                record=record,
            )
            r.trace["disposition"] = disp.to_json()
            result.dispositions.append(disp)
        if inv is not None and inv.vendor and inv.invoice_number:
            history.append(HistoryEntry(inv.vendor, inv.invoice_number, r.inputs.today))
        if r.decision.decision == "approve" and r.task is not None and r.plan is not None:
            result.feedback.append(feedback_record(r.task, r.plan, "approve"))
    playbook.commit()
    store.record_history(history)
    result.store = store
    result.baseline = baseline
    return result


def run_scenario(
    suite: Suite,
    cfg: Optional[EngineConfig] = None,
    bank: Optional[ExemplarBank] = None,
    registry: Optional[Registry] = None,
    *,
    jobs: int = 1,
) -> RunResult:
    return run_batch(suite_inputs(suite, cfg, bank), suite.config.scenario, registry, jobs=jobs)


def replay_trace(trace: Mapping[str, Any], registry: Optional[Registry] = None) -> DocumentRun:
    """Re-execute a trace's recorded inputs single-threaded."""
    return run_document(DocumentInputs.from_json(trace["inputs"]), registry, serial=True)


def replay_matches(trace: Mapping[str, Any], registry: Optional[Registry] = None) -> tuple[bool, list[str]]:
    """Compare a replay to the recorded decision and final value store, timing excluded."""
    again = replay_trace(trace, registry)
    diffs = []
    if again.decision.to_json() != trace["decision"]:
        diffs.append("decision")
    before = json.loads(canonical_json(strip_timing(trace.get("execution", {}))))
    after = json.loads(canonical_json(strip_timing(again.trace.get("execution", {}))))
    if before.get("value_store") != after.get("value_store"):
        diffs.append("value_store")
    if before.get("status") != after.get("status"):
        diffs.append("status")
    return not diffs, diffs
