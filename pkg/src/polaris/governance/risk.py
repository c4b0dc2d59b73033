"""Graded risk score and tier assignment."""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from typing import Any, Iterable, Mapping

from .anomaly import AnomalyFlag
from .policy import Violation

TIERS = ("auto_approve", "review", "block")


@dataclass(frozen=True)
class RiskAssessment:
    score: float
    fired_rules: tuple[str, ...]
    tier: str

    def to_json(self) -> dict[str, Any]:
        return {"score": self.score, "fired_rules": list(self.fired_rules), "tier": self.tier}

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "RiskAssessment":
        return cls(data["score"], tuple(data["fired_rules"]), data["tier"])


def fired_rules(violations: Iterable[Violation], anomalies: Iterable[AnomalyFlag]) -> tuple[str, ...]:
    # each rule fires at most once per invoice
    rules = {v.kind for v in violations} | {a.rule for a in anomalies}
    return tuple(sorted(rules))


def tier_for(score: float, t_review: float, t_block: float) -> str:
    if score < t_review:
        return "auto_approve"
    if score < t_block:
        return "review"
    return "block"


def risk_assess(
    violations: Iterable[Violation],
    anomalies: Iterable[AnomalyFlag],
    weights: Mapping[str, float],
    tiers: tuple[float, float],
) -> RiskAssessment:
    t_review, t_block = tiers
    if not t_review < t_block:
        raise ValueError("t_review must be below t_block")
    rules = fired_rules(violations, anomalies)
    # decimal sum so 0.6 + 0.3 lands exactly on 0.9
    total = sum((Decimal(str(weights[r])) for r in rules), Decimal("0"))
    score = float(total)
    return RiskAssessment(score, rules, tier_for(score, t_review, t_block))
