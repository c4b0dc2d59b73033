"""Rubric scoring, hard filtering, and single-plan selection."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

from .config import EngineConfig, RubricWeights
from .contracts import Registry
from .planner import Plan, extra_nodes, required_agents, type_check

# legal-but-risky inversions are measured against this ordering
SEQUENCE_RANK = {
    "PolicyRetrieval": 0,
    "RecordMatcher": 1,
    "AnomalyDetection": 1,
    "RiskControl": 2,
    "APIAccess": 3,
    "Scheduler": 3,
    "Approval": 4,
    "ReportGenerator": 5,
}
TERMS = ("compliance", "sequencing", "parsimony", "prior")
# relative tolerance for treating two utilities as tied
TIE_TOLERANCE = 1e-9


class AllCandidatesRejectedError(RuntimeError):
    pass


def hard_filter(
    candidates: Sequence[Plan], task: Any, registry: Registry, concurrency_limit: int = 4
) -> list[tuple[int, Plan]]:
    """Surviving (original index, plan) pairs, order preserved."""
    if not candidates:
        raise ValueError("no candidates to filter")
    kept = [(i, p) for i, p in enumerate(candidates) if type_check(p, registry, task, concurrency_limit).feasible]
    if not kept:
        raise AllCandidatesRejectedError("every candidate failed a hard constraint")
    return kept


def risky_inversions(plan: Plan) -> int:
    """Count ranked agent pairs where the later-ranked one is upstream of the earlier-ranked one."""
    anc = plan.ancestors()
    ranked = [n for n in plan.nodes if n.agent in SEQUENCE_RANK]
    count = 0
    for a in ranked:
        for b in ranked:
            if a.id in anc[b.id] and SEQUENCE_RANK[a.agent] > SEQUENCE_RANK[b.agent]:
                count += 1
    return count


def compliance_checks(plan: Plan, task: Any, registry: Registry) -> list[bool]:
    agents = plan.agent_set()
    checks = [a in agents for a in sorted(required_agents(task))]
    checks.append(all(registry.lookup(a).eligible(task) for a in agents if a in registry))
    groups = [registry.lookup(a).sod_group for a in plan.agents() if a in registry and registry.lookup(a).sod_group]
    checks.append(len(groups) == len(set(groups)))
    return checks


def score_terms(plan: Plan, task: Any, registry: Registry, cfg: Optional[EngineConfig] = None) -> dict[str, float]:
    cfg = cfg or EngineConfig()
    checks = compliance_checks(plan, task, registry)
    compliance = sum(checks) / len(checks)
    sequencing = max(0.0, 1.0 - cfg.sequencing_penalty * risky_inversions(plan))
    extra = min(extra_nodes(plan, task), cfg.max_extra)
    parsimony = 1.0 - extra / cfg.max_extra if cfg.max_extra > 0 else 1.0
    return {
        "compliance": compliance,
        "sequencing": sequencing,
        "parsimony": parsimony,
        "prior": min(1.0, max(0.0, plan.prior_score)),
    }


def utility(terms: Mapping[str, float], weights: RubricWeights) -> float:
    return sum(w * terms[t] for w, t in zip(weights.as_tuple(), TERMS))


@dataclass(frozen=True)
class SelectionDecision:
    chosen_index: int
    reason: str
    scores: tuple[Mapping[str, Any], ...] = field(default=(), compare=True)

    def to_json(self) -> dict[str, Any]:
        return {"chosen_index": self.chosen_index, "reason": self.reason, "scores": [dict(s) for s in self.scores]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "SelectionDecision":
        return cls(int(data["chosen_index"]), str(data["reason"]), tuple(dict(s) for s in data.get("scores", ())))

    @classmethod
    def loads(cls, text: str) -> "SelectionDecision":
        return cls.from_json(json.loads(text))


def _reason(index: int, terms: Mapping[str, float], weights: RubricWeights, runner_up: Optional[int]) -> str:
    contrib = {t: w * terms[t] for w, t in zip(weights.as_tuple(), TERMS)}
    dominant = max(TERMS, key=lambda t: (contrib[t], -TERMS.index(t)))
    versus = f" over candidate {runner_up}" if runner_up is not None else ""
    return f"candidate {index} selected{versus}; dominant term {dominant} ({terms[dominant]:.3f})"


def select(
    candidates: Sequence[Plan],
    task: Any,
    registry: Registry,
    weights: Optional[RubricWeights] = None,
    cfg: Optional[EngineConfig] = None,
    *,
    prefiltered: bool = False,
) -> SelectionDecision:
    """Argmax of the rubric utility over hard-filtered candidates.

    Ties within a relative tolerance go to the higher prior, then the lower
    index. ``prefiltered`` skips type checking for callers (tests) that have
    already decided which candidates count as admissible.
    """
    cfg = cfg or EngineConfig()
    weights = weights or cfg.rubric
    if not candidates:
        raise ValueError("no candidates to select from")
    survivors = list(enumerate(candidates)) if prefiltered else hard_filter(candidates, task, registry, cfg.concurrency_limit)
    alive = {i for i, _ in survivors}
    scale = sum(weights.as_tuple())
    rows: list[dict[str, Any]] = []
    best: Optional[tuple[int, float, float]] = None
    ranked: list[tuple[int, float, float]] = []
    for i, plan in enumerate(candidates):
        if i not in alive:
            rows.append({"index": i, "filtered": True})
            continue
        terms = score_terms(plan, task, registry, cfg)
        u = utility(terms, weights)
        rows.append({"index": i, "filtered": False, **{t: round(terms[t], 12) for t in TERMS}, "U": round(u, 12)})
        ranked.append((i, u, terms["prior"]))
    for i, u, prior in ranked:
        if best is None:
            best = (i, u, prior)
            continue
        tol = TIE_TOLERANCE * scale
        if u > best[1] + tol or (abs(u - best[1]) <= tol and prior > best[2]):
            best = (i, u, prior)
    assert best is not None
    others = sorted((r for r in ranked if r[0] != best[0]), key=lambda r: (-r[1], r[0]))
    runner_up = others[0][0] if others else None
    chosen_terms = {t: rows[best[0]][t] for t in TERMS}
    return SelectionDecision(best[0], _reason(best[0], chosen_terms, weights, runner_up), tuple(rows))
