"""Typed plan model, feasibility checking, and exemplar-biased candidate generation."""

from __future__ import annotations

import heapq
import itertools
import json
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Optional, Sequence

import yaml

from .config import EngineConfig
from .contracts import Registry, UnknownAgentError, UnknownTypeError

TASK_SOURCE = "task"

MIDDLE_AGENTS = ("PolicyRetrieval", "RecordMatcher", "AnomalyDetection", "RiskControl")
PREAMBLE_AGENTS = ("APIAccess", "Scheduler", "ExtraVerification")
SINK_AGENTS = ("Approval", "ReportGenerator")
OPTIONAL_MUTATIONS = ("RecordMatcher", "AnomalyDetection", "APIAccess")

# canonical stage order; breaks ties when linearizing a plan
STAGE_RANK = {
    "DocumentParser": 0,
    "DataValidator": 1,
    "PolicyRetrieval": 2,
    "AnomalyDetection": 3,
    "RecordMatcher": 3,
    "RiskControl": 4,
    "APIAccess": 5,
    "Scheduler": 5,
    "ExtraVerification": 6,
    "Approval": 7,
    "ReportGenerator": 8,
}
INVOICE_REQUIRED = frozenset({"DocumentParser", "DataValidator", "PolicyRetrieval", "AnomalyDetection", "RiskControl", "Approval"})


class PlanError(ValueError):
    pass


class NoFeasiblePlanError(RuntimeError):
    pass


def stage_rank(agent: str) -> int:
    return STAGE_RANK.get(agent, 99)


@dataclass(frozen=True)
class Binding:
    source: str  # upstream node id, or "task"
    slot: str = ""

    def to_json(self) -> dict[str, str]:
        return {"source": self.source, "slot": self.slot}


@dataclass(frozen=True)
class PlanNode:
    id: str
    agent: str
    bindings: Mapping[str, Binding] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {"id": self.id, "agent": self.agent, "bindings": {k: b.to_json() for k, b in sorted(self.bindings.items())}}


@dataclass(frozen=True)
class Plan:
    nodes: tuple[PlanNode, ...]
    edges: tuple[tuple[str, str], ...]
    prior_score: float = 0.0
    origin: str = ""

    def __post_init__(self) -> None:
        ids = [n.id for n in self.nodes]
        if len(ids) != len(set(ids)):
            raise PlanError(f"duplicate node ids {ids}")
        known = set(ids)
        for a, b in self.edges:
            if a not in known or b not in known:
                raise PlanError(f"edge ({a}, {b}) references an unknown node")

    def node(self, node_id: str) -> PlanNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def agents(self) -> list[str]:
        return [n.agent for n in self.nodes]

    def agent_set(self) -> frozenset[str]:
        return frozenset(self.agents())

    def node_for(self, agent: str) -> Optional[PlanNode]:
        for n in self.nodes:
            if n.agent == agent:
                return n
        return None

    def predecessors(self) -> dict[str, set[str]]:
        preds: dict[str, set[str]] = {n.id: set() for n in self.nodes}
        for a, b in self.edges:
            preds[b].add(a)
        return preds

    def successors(self) -> dict[str, set[str]]:
        succ: dict[str, set[str]] = {n.id: set() for n in self.nodes}
        for a, b in self.edges:
            succ[a].add(b)
        return succ

    def topological_order(self) -> Optional[list[str]]:
        """Linear extension with ties broken by stage rank then agent id; None on a cycle."""
        preds = self.predecessors()
        succ = self.successors()
        agent = {n.id: n.agent for n in self.nodes}
        indeg = {k: len(v) for k, v in preds.items()}
        heap = [(stage_rank(agent[k]), agent[k], k) for k, d in indeg.items() if d == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            _, _, k = heapq.heappop(heap)
            order.append(k)
            for s in succ[k]:
                indeg[s] -= 1
                if indeg[s] == 0:
                    heapq.heappush(heap, (stage_rank(agent[s]), agent[s], s))
        return order if len(order) == len(self.nodes) else None

    def is_acyclic(self) -> bool:
        return self.topological_order() is not None

    def ancestors(self) -> dict[str, frozenset[str]]:
        order = self.topological_order()
        if order is None:
            raise PlanError("plan has a cycle")
        preds = self.predecessors()
        anc: dict[str, frozenset[str]] = {}
        for k in order:
            acc: set[str] = set()
            for p in preds[k]:
                acc.add(p)
                acc |= anc[p]
            anc[k] = frozenset(acc)
        return anc

    def with_prior(self, score: float) -> "Plan":
        return replace(self, prior_score=score)

    def to_json(self) -> dict[str, Any]:
        return {
            "nodes": [n.to_json() for n in self.nodes],
            "edges": [list(e) for e in self.edges],
            "prior_score": self.prior_score,
            "origin": self.origin,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "Plan":
        nodes = tuple(
            PlanNode(n["id"], n["agent"], {k: Binding(b["source"], b["slot"]) for k, b in n["bindings"].items()})
            for n in data["nodes"]
        )
        return cls(nodes, tuple((a, b) for a, b in data["edges"]), data.get("prior_score", 0.0), data.get("origin", ""))


# --- construction helpers ----------------------------------------------------


def auto_bind(nodes: Sequence[tuple[str, str]], edges: Sequence[tuple[str, str]], registry: Registry) -> Plan:
    """Bind each input slot to the task record or to the closest compatible ancestor output."""
    bare = Plan(tuple(PlanNode(i, a) for i, a in nodes), tuple(edges))
    order = bare.topological_order()
    if order is None:
        return bare
    anc = bare.ancestors()
    depth = {k: i for i, k in enumerate(order)}
    agent_of = dict(nodes)
    bound = []
    for node_id, agent in nodes:
        bindings: dict[str, Binding] = {}
        if agent in registry:
            spec = registry.lookup(agent)
            for slot in spec.inputs:
                if registry.compatible("TaskRecord", slot.type):
                    bindings[slot.name] = Binding(TASK_SOURCE)
                    continue
                best: Optional[tuple[int, str, str]] = None
                for a in anc[node_id]:
                    if agent_of[a] not in registry:
                        continue
                    for out in registry.lookup(agent_of[a]).outputs:
                        if registry.compatible(out.type, slot.type):
                            cand = (depth[a], a, out.name)
                            if best is None or cand > best:
                                best = cand
                if best is not None:
                    bindings[slot.name] = Binding(best[1], best[2])
        bound.append(PlanNode(node_id, agent, bindings))
    return Plan(tuple(bound), tuple(edges))


def chain_plan(agents: Sequence[str], registry: Registry, origin: str = "") -> Plan:
    """A strictly linear plan over ``agents`` in the given order."""
    nodes = [(a, a) for a in agents]
    edges = [(agents[i], agents[i + 1]) for i in range(len(agents) - 1)]
    return replace(auto_bind(nodes, edges, registry), origin=origin)


# --- equivalence ---------------------------------------------------------------


@dataclass(frozen=True)
class EquivalenceKey:
    core_chain: tuple[str, ...]
    edge_set: tuple[tuple[str, str], ...]

    def to_json(self) -> dict[str, Any]:
        return {"core_chain": list(self.core_chain), "edge_set": [list(e) for e in self.edge_set]}


def core_chain(plan: Plan) -> tuple[str, ...]:
    order = plan.topological_order()
    if order is None:
        raise PlanError("core chain of a cyclic plan")
    return tuple(plan.node(k).agent for k in order)


def equivalence_key(plan: Plan) -> EquivalenceKey:
    agent = {n.id: n.agent for n in plan.nodes}
    edges = tuple(sorted({(agent[a], agent[b]) for a, b in plan.edges}))
    return EquivalenceKey(core_chain(plan), edges)


# --- feasibility -----------------------------------------------------------------


@dataclass(frozen=True)
class PlanViolation:
    code: str
    detail: str

    def to_json(self) -> dict[str, str]:
        return {"code": self.code, "detail": self.detail}


@dataclass(frozen=True)
class FeasibilityReport:
    violations: tuple[PlanViolation, ...]
    width: int = 0
    concurrency_limit: int = 4

    @property
    def feasible(self) -> bool:
        return not self.violations

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]

    @property
    def exceeds_limit(self) -> bool:
        # annotation only: the executor throttles, it does not reject
        return self.width > self.concurrency_limit

    def to_json(self) -> dict[str, Any]:
        return {
            "feasible": self.feasible,
            "violations": [v.to_json() for v in self.violations],
            "width": self.width,
            "concurrency_limit": self.concurrency_limit,
        }


def _width(plan: Plan) -> int:
    order = plan.topological_order() or []
    preds = plan.predecessors()
    level: dict[str, int] = {}
    for k in order:
        level[k] = 1 + max((level[p] for p in preds[k]), default=-1)
    counts: dict[int, int] = {}
    for lv in level.values():
        counts[lv] = counts.get(lv, 0) + 1
    return max(counts.values(), default=0)


def type_check(plan: Plan, registry: Registry, task: Any, concurrency_limit: int = 4) -> FeasibilityReport:
    out: list[PlanViolation] = []

    def bad(code: str, detail: str) -> None:
        out.append(PlanViolation(code, detail))

    ids = {n.id: n for n in plan.nodes}
    known = True
    for n in plan.nodes:
        if n.agent not in registry:
            bad("unknown_agent", f"{n.id}: {n.agent}")
            known = False
    seen: dict[str, str] = {}
    for n in plan.nodes:
        if n.agent in seen:
            bad("duplicate_agent", f"{n.agent} at {seen[n.agent]} and {n.id}")
        seen.setdefault(n.agent, n.id)
    order = plan.topological_order()
    if order is None:
        bad("cycle", "edge relation is cyclic")
    if not known or order is None:
        return FeasibilityReport(tuple(out), 0, concurrency_limit)

    anc = plan.ancestors()

    # (i) input compatibility
    for n in plan.nodes:
        spec = registry.lookup(n.agent)
        for slot in spec.inputs:
            b = n.bindings.get(slot.name)
            if b is None:
                bad("unbound_input", f"{n.id}.{slot.name}")
                continue
            if b.source == TASK_SOURCE:
                src_type = "TaskRecord"
            elif b.source in ids:
                try:
                    src_type = registry.lookup(ids[b.source].agent).output_type(b.slot)
                except KeyError:
                    bad("bad_binding", f"{n.id}.{slot.name} <- {b.source}.{b.slot}")
                    continue
                if b.source not in anc[n.id]:
                    bad("missing_data_edge", f"{b.source} is not upstream of {n.id}")
            else:
                bad("bad_binding", f"{n.id}.{slot.name} <- {b.source}")
                continue
            try:
                ok = registry.compatible(src_type, slot.type)
            except UnknownTypeError:
                ok = False
            if not ok:
                bad("type_incompatible", f"{n.id}.{slot.name}: {src_type} -> {slot.type}")
        extra = set(n.bindings) - {s.name for s in spec.inputs}
        if extra:
            bad("bad_binding", f"{n.id} binds undeclared slots {sorted(extra)}")

    # (ii) compliance ordering
    by_agent = {n.agent: n.id for n in plan.nodes}
    parser = by_agent.get("DocumentParser")
    validator = by_agent.get("DataValidator")
    for n in plan.nodes:
        spec = registry.lookup(n.agent)
        if n.agent == "DocumentParser":
            continue
        consumes = any(
            s.type in registry.types and "ParsedInvoice" in registry.types.ancestors(s.type) for s in spec.inputs
        )
        if consumes and (parser is None or parser not in anc[n.id]):
            bad("order_parse_first", f"{n.agent} is not downstream of DocumentParser")
    for agent in ("RiskControl", "Approval"):
        nid = by_agent.get(agent)
        if nid is not None and (validator is None or validator not in anc[nid]):
            bad("order_validate_first", f"{agent} is not downstream of DataValidator")
    middles = [by_agent[m] for m in MIDDLE_AGENTS if m in by_agent]
    for sink in SINK_AGENTS:
        sid = by_agent.get(sink)
        if sid is None:
            continue
        missing = [ids[m].agent for m in middles if m not in anc[sid]]
        if missing:
            bad("order_sink_last", f"{sink} is not downstream of {', '.join(missing)}")
    policy = by_agent.get("PolicyRetrieval")
    if task.has_vendor:
        for n in plan.nodes:
            if registry.lookup(n.agent).side_effecting and (policy is None or policy not in anc[n.id]):
                bad("order_policy_before_effect", f"{n.agent} runs without upstream PolicyRetrieval")
    sched, report = by_agent.get("Scheduler"), by_agent.get("ReportGenerator")
    if sched is not None and report is not None and sched not in anc[report]:
        bad("order_schedule_before_report", "Scheduler must precede ReportGenerator")
    if task.is_document_task and task.is_month_end and (sched is None or report is None):
        bad("month_end_unscheduled", "month-end batches must stage Scheduler before ReportGenerator")

    # eligibility and segregation of duties
    for n in plan.nodes:
        if not registry.lookup(n.agent).eligible(task):
            bad("ineligible", f"{n.agent} is not eligible for a {task.task_type} task")
    groups: dict[str, str] = {}
    for n in plan.nodes:
        g = registry.lookup(n.agent).sod_group
        if not g:
            continue
        if g in groups:
            bad("sod_conflict", f"{groups[g]} and {n.id} share duty group {g}")
        groups.setdefault(g, n.id)

    return FeasibilityReport(tuple(out), _width(plan), concurrency_limit)


# --- exemplar bank -----------------------------------------------------------------


@dataclass(frozen=True)
class Signature:
    task_types: tuple[str, ...] = ()
    document: Optional[bool] = None
    month_end: Optional[bool] = None
    vendor: Optional[bool] = None

    def matches(self, task: Any) -> bool:
        if self.task_types and task.task_type not in self.task_types:
            return False
        if self.document is not None and task.is_document_task != self.document:
            return False
        if self.month_end is not None and task.is_month_end != self.month_end:
            return False
        if self.vendor is not None and task.has_vendor != self.vendor:
            return False
        return True

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        if self.task_types:
            out["task_types"] = list(self.task_types)
        for k in ("document", "month_end", "vendor"):
            if getattr(self, k) is not None:
                out[k] = getattr(self, k)
        return out

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "Signature":
        return cls(tuple(data.get("task_types", ())), data.get("document"), data.get("month_end"), data.get("vendor"))

    @classmethod
    def of_task(cls, task: Any) -> "Signature":
        return cls((task.task_type,), task.is_document_task, task.is_month_end, task.has_vendor)


@dataclass(frozen=True)
class Exemplar:
    name: str
    signature: Signature
    chain: tuple[str, ...]
    rationale: str = ""
    weight: float = 1.0
    polarity: str = "positive"

    def __post_init__(self) -> None:
        if self.weight <= 0:
            raise ValueError(f"exemplar {self.name}: weight must be positive")
        if self.polarity not in ("positive", "negative"):
            raise ValueError(f"exemplar {self.name}: bad polarity {self.polarity!r}")
        if not self.chain:
            raise ValueError(f"exemplar {self.name}: empty chain")

    def to_json(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "signature": self.signature.to_json(),
            "chain": list(self.chain),
            "rationale": self.rationale,
            "weight": self.weight,
            "polarity": self.polarity,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "Exemplar":
        return cls(
            data["name"],
            Signature.from_json(data.get("signature", {})),
            tuple(data["chain"]),
            data.get("rationale", ""),
            float(data.get("weight", 1.0)),
            data.get("polarity", "positive"),
        )


@dataclass(frozen=True)
class ExemplarBank:
    exemplars: tuple[Exemplar, ...]

    def validate(self, registry: Registry) -> None:
        for ex in self.exemplars:
            for agent in ex.chain:
                if agent not in registry:
                    raise UnknownAgentError(f"exemplar {ex.name} references {agent}")

    def matching(self, task: Any) -> list[Exemplar]:
        return [e for e in self.exemplars if e.signature.matches(task)]

    def positives(self, task: Any) -> list[Exemplar]:
        return [e for e in self.matching(task) if e.polarity == "positive"]

    def negatives(self, task: Any) -> list[Exemplar]:
        return [e for e in self.matching(task) if e.polarity == "negative"]

    def without(self, name: str) -> "ExemplarBank":
        return ExemplarBank(tuple(e for e in self.exemplars if e.name != name))

    def __len__(self) -> int:
        return len(self.exemplars)

    def to_json(self) -> dict[str, Any]:
        return {"exemplars": [e.to_json() for e in self.exemplars]}

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "ExemplarBank":
        return cls(tuple(Exemplar.from_json(e) for e in data["exemplars"]))

    @classmethod
    def load(cls, path: str | Path | None = None) -> "ExemplarBank":
        if path is None:
            text = resources.files("polaris.data").joinpath("exemplars.yaml").read_text()
        else:
            text = Path(path).read_text()
        return cls.from_json(yaml.safe_load(text))


def feedback_record(task: Any, plan: Plan, decision: str) -> str:
    """One JSON line for the exemplar feedback file (successful core chains only)."""
    sig = Signature.of_task(task)
    return json.dumps(
        {"signature": sig.to_json(), "chain": list(core_chain(plan)), "decision": decision, "origin": plan.origin},
        sort_keys=True,
    )


# --- generation ----------------------------------------------------------------------


def required_agents(task: Any) -> frozenset[str]:
    if task.is_document_task:
        req = set(INVOICE_REQUIRED)
        if task.is_month_end:
            req |= {"Scheduler", "ReportGenerator"}
        return frozenset(req)
    if task.task_type == "event_triggered":
        return frozenset({"Scheduler", "ReportGenerator"})
    return frozenset({"ReportGenerator"})


def extra_nodes(plan: Plan, task: Any) -> int:
    return len(plan.agent_set() - required_agents(task))


def _is_subsequence(small: Sequence[str], big: Sequence[str]) -> bool:
    it = iter(big)
    return all(any(x == y for y in it) for x in small)


def prior_score(plan: Plan, task: Any, bank: ExemplarBank, cfg: Optional[EngineConfig] = None) -> float:
    cfg = cfg or EngineConfig()
    return _prior(
        core_chain(plan), plan.agent_set(), required_agents(task), bank.positives(task), cfg.w_sim, cfg.w_brev, cfg.max_extra
    )


def _prior(
    chain: Sequence[str],
    agents: frozenset[str],
    required: frozenset[str],
    positives: Sequence[Exemplar],
    w_sim: float,
    w_brev: float,
    max_extra: int,
) -> float:
    sim = max((e.weight for e in positives if _is_subsequence(e.chain, chain)), default=0.0)
    extra = min(len(agents - required), max_extra)
    brev = 1.0 - extra / max_extra if max_extra > 0 else 1.0
    score = w_sim * min(sim, 1.0) + w_brev * brev
    return round(min(1.0, max(0.0, score)), 12)


@dataclass(frozen=True)
class _Draft:
    index: int
    agents: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    origin: str


def _layout(agents: Iterable[str], middle_order: Optional[Sequence[str]], sink_mode: str) -> tuple[tuple[str, ...], tuple[tuple[str, str], ...]]:
    """Place agents into stage layers and wire them.

    ``middle_order`` None runs the middle checks in parallel; otherwise they
    run as a chain in that order. ``sink_mode`` is "chain" (sinks in
    sequence) or "fan" (sinks side by side).
    """
    present = set(agents)
    front = [a for a in ("DocumentParser", "DataValidator") if a in present]
    middles = [m for m in (middle_order or sorted((m for m in MIDDLE_AGENTS if m in present), key=lambda a: (stage_rank(a), a))) if m in present]
    pre = sorted((a for a in present if a in PREAMBLE_AGENTS), key=lambda a: (stage_rank(a), a))
    sinks = sorted((a for a in present if a in SINK_AGENTS), key=lambda a: (stage_rank(a), a))
    other = sorted(present - set(front) - set(middles) - set(pre) - set(sinks))
    pre = pre + other
    edges: list[tuple[str, str]] = []
    for a, b in zip(front, front[1:]):
        edges.append((a, b))
    tails = front[-1:]
    if middles:
        if middle_order is None:
            for m in middles:
                edges += [(t, m) for t in tails]
            tails = list(middles)
        else:
            chain = list(middles)
            edges += [(t, chain[0]) for t in tails]
            edges += list(zip(chain, chain[1:]))
            tails = chain[-1:]
    for p in pre:
        edges += [(t, p) for t in tails]
        tails = [p]
    if sinks:
        if sink_mode == "chain":
            edges += [(t, sinks[0]) for t in tails]
            edges += list(zip(sinks, sinks[1:]))
        else:
            for s in sinks:
                edges += [(t, s) for t in tails]
    order = front + middles + pre + sinks
    return tuple(order), tuple(dict.fromkeys(edges))


def _drafts(positives: Sequence[Exemplar]) -> Iterator[_Draft]:
    """Deterministic, lexicographic walk over (exemplar, toggles, arrangement, sinks)."""
    index = 0
    toggle_sets = [c for r in range(len(OPTIONAL_MUTATIONS) + 1) for c in itertools.combinations(OPTIONAL_MUTATIONS, r)]
    for ex in positives:
        for toggles in toggle_sets:
            agents = set(ex.chain) ^ set(toggles)
            if not agents:
                continue
            mids = [m for m in ex.chain if m in MIDDLE_AGENTS and m in agents]
            mids += [m for m in MIDDLE_AGENTS if m in agents and m not in mids]
            arrangements: list[Optional[tuple[str, ...]]] = [None]
            if len(mids) > 1:
                arrangements += list(itertools.permutations(mids))
            for arr in arrangements:
                for sink_mode in ("chain", "fan"):
                    order, edges = _layout(agents, arr, sink_mode)
                    tag = "parallel" if arr is None else "serial:" + ">".join(arr)
                    origin = f"{ex.name}|toggle:{','.join(toggles) or '-'}|{tag}|sinks:{sink_mode}"
                    yield _Draft(index, order, edges, origin)
                    index += 1


def _draft_chain(d: _Draft) -> tuple[str, ...]:
    # same linearization as core_chain, computed without building bindings
    preds: dict[str, int] = {a: 0 for a in d.agents}
    succ: dict[str, list[str]] = {a: [] for a in d.agents}
    for a, b in d.edges:
        preds[b] += 1
        succ[a].append(b)
    heap = [(stage_rank(a), a) for a, n in preds.items() if n == 0]
    heapq.heapify(heap)
    out = []
    while heap:
        _, a = heapq.heappop(heap)
        out.append(a)
        for s in succ[a]:
            preds[s] -= 1
            if preds[s] == 0:
                heapq.heappush(heap, (stage_rank(s), s))
    return tuple(out)


@lru_cache(maxsize=256)
def _ranked_drafts(
    positives: tuple[Exemplar, ...],
    banned: frozenset[tuple[str, ...]],
    required: frozenset[str],
    weights: tuple[float, float, int],
) -> tuple[tuple[float, int, _Draft], ...]:
    # pure in its (hashable) arguments, so tasks sharing a signature share the work
    w_sim, w_brev, max_extra = weights
    scored = []
    seen: set[tuple[tuple[str, ...], tuple[tuple[str, str], ...]]] = set()
    for d in _drafts(positives):
        chain = _draft_chain(d)
        key = (chain, tuple(sorted(d.edges)))
        if key in seen or chain in banned:
            continue
        seen.add(key)
        prior = _prior(chain, frozenset(d.agents), required, positives, w_sim, w_brev, max_extra)
        scored.append((-prior, d.index, d))
    scored.sort(key=lambda t: (t[0], t[1]))
    return tuple(scored)


def generate_candidates(
    task: Any,
    bank: ExemplarBank,
    registry: Registry,
    K: int = 5,
    cfg: Optional[EngineConfig] = None,
) -> list[Plan]:
    """Top-K feasible, pairwise non-equivalent plans sorted by prior score."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if len(bank) == 0:
        raise ValueError("exemplar bank is empty")
    cfg = cfg or EngineConfig()
    positives = bank.positives(task)
    if not positives:
        raise NoFeasiblePlanError(f"no exemplar matches a {task.task_type} task")
    banned = frozenset(e.chain for e in bank.negatives(task))
    scored = _ranked_drafts(tuple(positives), banned, required_agents(task), (cfg.w_sim, cfg.w_brev, cfg.max_extra))

    out: list[Plan] = []
    for neg_prior, _, d in scored:
        plan = auto_bind([(a, a) for a in d.agents], d.edges, registry)
        if not type_check(plan, registry, task, cfg.concurrency_limit).feasible:
            continue
        out.append(replace(plan, prior_score=-neg_prior, origin=d.origin))
        if len(out) == K:
            break
    if not out:
        raise NoFeasiblePlanError(f"every enumerated plan for a {task.task_type} task failed type_check")
    return out
