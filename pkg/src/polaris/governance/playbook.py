"""Deterministic routing playbook: enrich, classify, route, act, close."""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Mapping, Optional, Sequence

from .anomaly import AnomalyBaseline, AnomalyFlag
from .policy import PolicyRecord, Violation
from .risk import RiskAssessment

STAGES = ("enrich", "classify", "route", "act", "close")
SEVERITY = {"none": 0, "low": 1, "medium": 2, "high": 3}


def finding_severity(finding: Violation | AnomalyFlag) -> str:
    if isinstance(finding, Violation):
        return "high" if finding.blocking else "medium"
    return "medium" if finding.kind == "amount" else "low"


@dataclass(frozen=True)
class Action:
    kind: str  # notify | request_artifacts | schedule_recheck | hold_posting | open_ticket
    target: str
    detail: str = ""

    def to_json(self) -> dict[str, Any]:
        return {"kind": self.kind, "target": self.target, "detail": self.detail}


@dataclass(frozen=True)
class RoutingDisposition:
    invoice_number: str
    stages: tuple[str, ...]
    severity: str
    route: str  # auto | ticket | hold
    actions: tuple[Action, ...]
    outcome: str  # closed_clean | closed_auto | ticket_open | held
    context: Mapping[str, Any] = field(default_factory=dict)
    baseline_updated: bool = False

    def to_json(self) -> dict[str, Any]:
        return {
            "invoice_number": self.invoice_number,
            "stages": list(self.stages),
            "severity": self.severity,
            "route": self.route,
            "actions": [a.to_json() for a in self.actions],
            "outcome": self.outcome,
            "context": dict(self.context),
            "baseline_updated": self.baseline_updated,
        }


@dataclass
class Playbook:
    """One instance per run; its disposition log is the prior-incident source."""

    baseline: Optional[AnomalyBaseline] = None
    log: list[RoutingDisposition] = field(default_factory=list)
    # baseline appends wait here until commit() so a batch reads one snapshot
    pending: list[tuple[Optional[str], Decimal]] = field(default_factory=list)

    def prior_incidents(self, vendor: Optional[str]) -> int:
        if not vendor:
            return 0
        return sum(1 for d in self.log if d.context.get("vendor") == vendor and d.route != "auto")

    def route(
        self,
        violations: Sequence[Violation],
        anomalies: Sequence[AnomalyFlag],
        risk: RiskAssessment,
        *,
        invoice_number: str = "",
        vendor: Optional[str] = None,
        amount: Optional[Decimal] = None,
        record: Optional[PolicyRecord] = None,
    ) -> RoutingDisposition:
        # enrich
        context: dict[str, Any] = {
            "vendor": vendor,
            "policy": record.to_json() if record else None,
            "prior_incidents": self.prior_incidents(vendor),
            "tier": risk.tier,
            "score": risk.score,
        }
        # classify
        findings: list[Violation | AnomalyFlag] = [*violations, *anomalies]
        severity = max((finding_severity(f) for f in findings), key=SEVERITY.__getitem__, default="none")
        # route
        if risk.tier == "block" or any(v.blocking for v in violations):
            route = "hold"
        elif risk.tier == "review" or findings:
            route = "ticket"
        else:
            route = "auto"
        # act
        target = invoice_number or "<unknown>"
        actions: list[Action] = []
        if route == "hold":
            actions.append(Action("hold_posting", target, "APIAccess"))
            actions.append(Action("request_artifacts", target, ",".join(sorted({v.kind for v in violations}))))
            actions.append(Action("notify", target, "ap_controller"))
        elif route == "ticket":
            actions.append(Action("open_ticket", target, "human_review"))
            actions.append(Action("notify", target, "ap_reviewer"))
            if any(a.kind == "amount" for a in anomalies):
                actions.append(Action("schedule_recheck", target, "amount_baseline"))
        # close
        if not findings:
            outcome = "closed_clean" if route == "auto" else "held"
        else:
            outcome = {"auto": "closed_auto", "ticket": "ticket_open", "hold": "held"}[route]
        updated = False
        if self.baseline is not None and amount is not None and route != "hold":
            # outcomes refresh the baselines once the batch commits
            self.pending.append((vendor, amount))
            updated = True
        disp = RoutingDisposition(target, STAGES, severity, route, tuple(actions), outcome, context, updated)
        self.log.append(disp)
        return disp

    def commit(self) -> int:
        """Apply deferred baseline updates; returns how many were applied."""
        n = len(self.pending)
        if self.baseline is not None:
            for vendor, amount in self.pending:
                self.baseline.append(vendor, amount)
        self.pending.clear()
        return n


def route(
    violations: Sequence[Violation],
    anomalies: Sequence[AnomalyFlag],
    risk: RiskAssessment,
    *,
    baseline: Optional[AnomalyBaseline] = None,
    **context: Any,
) -> RoutingDisposition:
    """Single-shot playbook run that commits its baseline update immediately."""
    book = Playbook(baseline)
    disp = book.route(violations, anomalies, risk, **context)
    book.commit()
    return disp
