"""Deterministic backends for the agent catalog and the default registry."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date
from decimal import Decimal
from typing import Any, Mapping, Optional, Sequence

from .config import EngineConfig
from .contracts import FunctionBackend, Registry, build_type_graph, catalog_specs
from .extraction import (
    ExtractedInvoice,
    FallbackResult,
    SyntheticDocument,
    ValidatedInvoice,
    parse,
    repair_loop,
    validate,
)
from .governance import (
    AnomalyBaseline,
    AnomalyFlag,
    PolicyLookup,
    PolicyStore,
    RiskAssessment,
    Violation,
    check_violations,
    detect_anomalies,
    retrieve_policy,
    risk_assess,
)
from .serialization import stable_digest
from .task_model import TaskRecord

CORE_POLICY_KINDS = ("unknown_vendor", "threshold_breach", "currency_mismatch")
REJECT_KINDS = frozenset({"blacklisted", "duplicate"})


@dataclass
class AgentContext:
    """Everything a backend may read besides its bound inputs."""

    task: TaskRecord
    cfg: EngineConfig = field(default_factory=EngineConfig)
    doc: Optional[SyntheticDocument] = None
    store: PolicyStore = field(default_factory=PolicyStore)
    baseline: AnomalyBaseline = field(default_factory=AnomalyBaseline)
    today: date = field(default_factory=lambda: date(2024, 6, 14))
    approvals: frozenset[str] = frozenset()
    # invoice_number -> (vendor, total) purchase-order reference
    ledger: Mapping[str, tuple[str, Decimal]] = field(default_factory=dict)
    plan_agents: tuple[str, ...] = ()
    # agent id -> output slot map for done ancestors of the running node
    upstream: Mapping[str, Mapping[str, Any]] = field(default_factory=dict)

    def for_node(self, upstream: Mapping[str, Mapping[str, Any]]) -> "AgentContext":
        clone = AgentContext(**{k: getattr(self, k) for k in self.__dataclass_fields__})
        clone.upstream = upstream
        return clone

    def upstream_value(self, agent: str, slot: str) -> Any:
        return self.upstream.get(agent, {}).get(slot)


# --- report types ------------------------------------------------------------


@dataclass(frozen=True)
class PolicyContext:
    lookup: PolicyLookup
    violations: tuple[Violation, ...]

    def blocking_violations(self) -> list[Violation]:
        return [v for v in self.violations if v.blocking]

    def to_json(self) -> dict[str, Any]:
        return {"lookup": self.lookup.to_json(), "violations": [v.to_json() for v in self.violations]}


@dataclass(frozen=True)
class MatchReport:
    reference_found: bool
    discrepancies: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.discrepancies

    def to_json(self) -> dict[str, Any]:
        return {"reference_found": self.reference_found, "discrepancies": list(self.discrepancies)}


@dataclass(frozen=True)
class AnomalyReport:
    flags: tuple[AnomalyFlag, ...]
    amount_source: str
    amount_score: Optional[float]
    k_mad: float

    def guard_signals(self) -> set[str]:
        return {"anomaly_high"} if any(f.kind == "amount" for f in self.flags) else set()

    def to_json(self) -> dict[str, Any]:
        return {
            "flags": [f.to_json() for f in self.flags],
            "amount_source": self.amount_source,
            "amount_score": None if self.amount_score is None else round(self.amount_score, 6),
            "k_mad": self.k_mad,
        }


@dataclass(frozen=True)
class RiskReport:
    violations: tuple[Violation, ...]
    sod_ok: bool
    assessment: RiskAssessment

    def blocking_violations(self) -> list[Violation]:
        return [v for v in self.violations if v.blocking]

    def guard_signals(self) -> set[str]:
        return {"risk_low"} if self.assessment.tier == "auto_approve" else set()

    def to_json(self) -> dict[str, Any]:
        return {
            "violations": [v.to_json() for v in self.violations],
            "sod_ok": self.sod_ok,
            "assessment": self.assessment.to_json(),
        }


@dataclass(frozen=True)
class ApiResult:
    system: str
    operation: str
    status: str
    reference: str

    def to_json(self) -> dict[str, Any]:
        return {"system": self.system, "operation": self.operation, "status": self.status, "reference": self.reference}


@dataclass(frozen=True)
class ScheduleToken:
    job: str
    run_date: str

    def to_json(self) -> dict[str, Any]:
        return {"job": self.job, "run_date": self.run_date}


@dataclass(frozen=True)
class VerificationReport:
    passed: bool
    failed_rules: tuple[str, ...]
    match_ok: bool

    def to_json(self) -> dict[str, Any]:
        return {"passed": self.passed, "failed_rules": list(self.failed_rules), "match_ok": self.match_ok}


@dataclass(frozen=True)
class Decision:
    decision: str  # approve | hold | reject
    rationale: tuple[str, ...]
    assessment: RiskAssessment
    violations: tuple[Violation, ...]
    anomalies: tuple[AnomalyFlag, ...]

    def to_json(self) -> dict[str, Any]:
        return {
            "decision": self.decision,
            "rationale": list(self.rationale),
            "assessment": self.assessment.to_json(),
            "violations": [v.to_json() for v in self.violations],
            "anomalies": [a.to_json() for a in self.anomalies],
        }


@dataclass(frozen=True)
class Report:
    summary: Mapping[str, Any]

    def to_json(self) -> dict[str, Any]:
        return dict(self.summary)


# --- shared decision logic ------------------------------------------------------


def merge_violations(*groups: Sequence[Violation]) -> tuple[Violation, ...]:
    seen: dict[str, Violation] = {}
    for group in groups:
        for v in group:
            seen.setdefault(v.kind, v)
    return tuple(sorted(seen.values(), key=lambda v: v.kind))


def collect_findings(values: Mapping[str, Mapping[str, Any]]) -> tuple[tuple[Violation, ...], tuple[AnomalyFlag, ...]]:
    """Violations and anomaly flags from whatever policy/risk/anomaly outputs exist."""
    groups: list[Sequence[Violation]] = []
    anomalies: tuple[AnomalyFlag, ...] = ()
    for agent in sorted(values):
        for v in values[agent].values():
            if isinstance(v, (PolicyContext, RiskReport)):
                groups.append(v.violations)
            elif isinstance(v, AnomalyReport):
                anomalies = v.flags
    return merge_violations(*groups), anomalies


def decide(
    violations: Sequence[Violation],
    anomalies: Sequence[AnomalyFlag],
    invoice: Optional[ExtractedInvoice],
    cfg: EngineConfig,
    *,
    verification: Optional[VerificationReport] = None,
    approval_ran: bool = True,
) -> Decision:
    """Approve only on a clean, validated, low-risk invoice; otherwise hold or reject."""
    assessment = risk_assess(violations, anomalies, cfg.rule_weights, (cfg.t_review, cfg.t_block))
    rationale: list[str] = []
    for v in violations:
        rationale.append(f"policy:{v.kind}" + (":blocking" if v.blocking else ""))
    for a in anomalies:
        score = "" if a.score is None else f":z={a.score:.2f}"
        rationale.append(f"anomaly:{a.kind}:{a.field}:{a.source}{score}")
    fallback = isinstance(invoice, ValidatedInvoice) and invoice.fallback
    verdict_ok = isinstance(invoice, ValidatedInvoice) and invoice.report is not None and invoice.report.passed
    if fallback:
        rationale.append("extraction:fallback:human_review")
    elif not verdict_ok:
        rationale.append("extraction:unvalidated")
    if verification is not None and not verification.passed:
        rationale.append("guard:extra_verification_failed")
    if not approval_ran:
        rationale.append("approval:not_dispatched")
    rationale.append(f"risk:{assessment.tier}:{assessment.score:.2f}")

    blocking = any(v.blocking for v in violations)
    if assessment.tier == "block" or any(v.kind in REJECT_KINDS for v in violations):
        outcome = "reject"
    elif (
        approval_ran
        and not blocking
        and verdict_ok
        and not fallback
        and assessment.tier == "auto_approve"
        and (verification is None or verification.passed)
    ):
        outcome = "approve"
    else:
        outcome = "hold"
    return Decision(outcome, tuple(rationale), assessment, tuple(violations), tuple(anomalies))


# --- backends --------------------------------------------------------------------


def _invoice(inputs: Mapping[str, Any]) -> ExtractedInvoice:
    return inputs["invoice"]


def document_parser(inputs: Mapping[str, Any], ctx: AgentContext) -> dict[str, Any]:
    if ctx.doc is None:
        raise ValueError("document task without a document")
    return {"parsed": parse(ctx.doc)}


def data_validator(inputs: Mapping[str, Any], ctx: AgentContext) -> dict[str, Any]:
    if ctx.doc is None:
        raise ValueError("document task without a document")
    cfg = ctx.cfg
    outcome = repair_loop(ctx.doc, cfg.tau_c, cfg.L_max, epsilon=Decimal(cfg.epsilon), initial=inputs["parsed"])
    return {"validated": ValidatedInvoice.from_outcome(outcome)}


def record_matcher(inputs: Mapping[str, Any], ctx: AgentContext) -> dict[str, Any]:
    inv = _invoice(inputs)
    ref = ctx.ledger.get(inv.invoice_number or "")
    if ref is None:
        return {"match": MatchReport(False, ())}
    vendor, total = ref
    issues = []
    if (inv.vendor or "").casefold() != vendor.casefold():
        issues.append("vendor")
    if inv.total != total:
        issues.append("total")
    return {"match": MatchReport(True, tuple(issues))}


def policy_retrieval(inputs: Mapping[str, Any], ctx: AgentContext) -> dict[str, Any]:
    inv = _invoice(inputs)
    lookup = retrieve_policy(inv.vendor, ctx.store)
    found = check_violations(inv, lookup, ctx.approvals, ctx.store, ctx.today, lookback_days=ctx.cfg.lookback_days)
    core = tuple(v for v in found if v.kind in CORE_POLICY_KINDS)
    return {"policy": PolicyContext(lookup, core)}


def anomaly_detection(inputs: Mapping[str, Any], ctx: AgentContext) -> dict[str, Any]:
    from .governance.anomaly import amount_score

    inv = _invoice(inputs)
    flags = detect_anomalies(inv, ctx.baseline, ctx.cfg.k_mad, ctx.today)
    source, score = amount_score(inv, ctx.baseline) if inv.total is not None else ("none", None)
    return {"anomalies": AnomalyReport(tuple(flags), source, score, ctx.cfg.k_mad)}


def _sod_ok(ctx: AgentContext, registry: Registry) -> bool:
    groups = [registry.lookup(a).sod_group for a in ctx.plan_agents if a in registry and registry.lookup(a).sod_group]
    return len(groups) == len(set(groups))


def make_risk_control(registry: Registry):
    def risk_control(inputs: Mapping[str, Any], ctx: AgentContext) -> dict[str, Any]:
        inv = _invoice(inputs)
        cfg = ctx.cfg
        lookup = retrieve_policy(inv.vendor, ctx.store)
        found = check_violations(
            inv,
            lookup,
            ctx.approvals,
            ctx.store,
            ctx.today,
            lookback_days=cfg.lookback_days,
            enforce_provenance=cfg.enforce_provenance,
        )
        anomalies: Sequence[AnomalyFlag] = ()
        report = ctx.upstream_value("AnomalyDetection", "anomalies")
        if isinstance(report, AnomalyReport):
            anomalies = report.flags
        assessment = risk_assess(found, anomalies, cfg.rule_weights, (cfg.t_review, cfg.t_block))
        return {"risk": RiskReport(tuple(found), _sod_ok(ctx, registry), assessment)}

    return risk_control


def api_access(inputs: Mapping[str, Any], ctx: AgentContext) -> dict[str, Any]:
    inv = _invoice(inputs)
    # recording stub: no external system is contacted
    ref = stable_digest({"invoice": inv.fields_json(), "op": "post_invoice"})[:16]
    return {"api": ApiResult("erp", "post_invoice", "recorded", ref)}


def scheduler(inputs: Mapping[str, Any], ctx: AgentContext) -> dict[str, Any]:
    job = "month_end_close" if ctx.task.is_month_end else "scheduled_run"
    return {"schedule": ScheduleToken(job, ctx.today.isoformat())}


def extra_verification(inputs: Mapping[str, Any], ctx: AgentContext) -> dict[str, Any]:
    inv = _invoice(inputs)
    report = validate(inv, ctx.cfg.tau_c, Decimal(ctx.cfg.epsilon))
    match = ctx.upstream_value("RecordMatcher", "match")
    if match is None:
        match = record_matcher({"invoice": inv}, ctx)["match"]
    passed = report.passed and match.ok and not (isinstance(inv, ValidatedInvoice) and inv.fallback)
    return {"verification": VerificationReport(passed, report.rules(), match.ok)}


def approval(inputs: Mapping[str, Any], ctx: AgentContext) -> dict[str, Any]:
    inv = _invoice(inputs)
    violations, anomalies = collect_findings(ctx.upstream)
    verification = ctx.upstream_value("ExtraVerification", "verification")
    return {"decision": decide(violations, anomalies, inv, ctx.cfg, verification=verification)}


def report_generator(inputs: Mapping[str, Any], ctx: AgentContext) -> dict[str, Any]:
    summary: dict[str, Any] = {"task_type": ctx.task.task_type, "upstream": sorted(ctx.upstream)}
    decision = ctx.upstream_value("Approval", "decision")
    if decision is not None:
        summary["decision"] = decision.decision
    schedule = ctx.upstream_value("Scheduler", "schedule")
    if schedule is not None:
        summary["schedule"] = schedule.job
    return {"report": Report(summary)}


def default_registry(include_extensions: bool = True) -> Registry:
    registry = Registry(build_type_graph())
    registry.type_bindings.update(
        {
            "TaskRecord": TaskRecord,
            "ParsedInvoice": ExtractedInvoice,
            "ValidatedInvoice": ValidatedInvoice,
            "PolicyContext": PolicyContext,
            "MatchReport": MatchReport,
            "AnomalyReport": AnomalyReport,
            "RiskReport": RiskReport,
            "ApiResult": ApiResult,
            "ScheduleToken": ScheduleToken,
            "Decision": Decision,
            "Report": Report,
            "VerificationReport": VerificationReport,
        }
    )
    for spec in catalog_specs(include_extensions):
        registry.register(spec)
    backends = {
        "DocumentParser": document_parser,
        "DataValidator": data_validator,
        "RecordMatcher": record_matcher,
        "PolicyRetrieval": policy_retrieval,
        "AnomalyDetection": anomaly_detection,
        "RiskControl": make_risk_control(registry),
        "APIAccess": api_access,
        "Scheduler": scheduler,
        "Approval": approval,
        "ReportGenerator": report_generator,
        "ExtraVerification": extra_verification,
    }
    for agent, fn in backends.items():
        if agent in registry:
            # side-effecting stubs are serialized like a real external client would be
            reentrant = not registry.lookup(agent).side_effecting
            registry.bind_backend(agent, FunctionBackend(fn, deterministic=True, reentrant=reentrant))
    return registry


__all__ = [
    "AgentContext",
    "AnomalyReport",
    "ApiResult",
    "Decision",
    "FallbackResult",
    "MatchReport",
    "PolicyContext",
    "Report",
    "RiskReport",
    "ScheduleToken",
    "VerificationReport",
    "collect_findings",
    "decide",
    "default_registry",
    "merge_violations",
]
