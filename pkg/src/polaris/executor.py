"""Dependency-graph execution with completion-based readiness and dynamic guards.

Dispatch proceeds in waves: every ready node (up to the concurrency limit) is
dispatched, the wave runs to a barrier, and completions are then applied in a
fixed order. Guard signals are read only at that point, so an injected edge can
never target a node that is already running. The serial replay mode runs the
same waves one node at a time and therefore reaches the identical final state.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable, Mapping, Optional

from .contracts import Registry
from .planner import MIDDLE_AGENTS, SINK_AGENTS, TASK_SOURCE, Binding, Plan, stage_rank
from .serialization import to_jsonable

STATUSES = ("pending", "ready", "running", "done", "failed", "skipped")
SIGNALS = ("anomaly_high", "risk_low")
GUARD_AGENT = "ExtraVerification"
# skip reasons that still count as resolved for downstream readiness
RESOLVED_SKIPS = frozenset({"bypass", "governance_block"})


class CompileError(ValueError):
    pass


class InjectionRaceError(RuntimeError):
    pass


@dataclass
class ExecutableGraph:
    nodes: dict[str, str]  # node id -> agent id
    bindings: dict[str, dict[str, Binding]]
    edges: set[tuple[str, str]]
    plan: Plan

    def predecessors(self, node: str, extra: Optional[set[tuple[str, str]]] = None) -> set[str]:
        edges = self.edges | (extra or set())
        return {a for a, b in edges if b == node}

    def copy(self) -> "ExecutableGraph":
        return ExecutableGraph(dict(self.nodes), {k: dict(v) for k, v in self.bindings.items()}, set(self.edges), self.plan)

    def in_degree(self, node: str) -> int:
        return len(self.predecessors(node))

    def to_json(self) -> dict[str, Any]:
        return {
            "nodes": dict(sorted(self.nodes.items())),
            "edges": sorted([list(e) for e in self.edges]),
            "bindings": {
                n: {k: b.to_json() for k, b in sorted(bs.items())} for n, bs in sorted(self.bindings.items())
            },
        }


def _reach(nodes: set[str], edges: set[tuple[str, str]]) -> dict[str, set[str]]:
    succ: dict[str, set[str]] = {n: set() for n in nodes}
    for a, b in edges:
        succ[a].add(b)
    anc: dict[str, set[str]] = {n: set() for n in nodes}
    for src in nodes:
        stack = list(succ[src])
        seen: set[str] = set()
        while stack:
            k = stack.pop()
            if k in seen:
                continue
            seen.add(k)
            anc[k].add(src)
            stack.extend(succ[k])
    return anc


def _transitive_reduction(nodes: set[str], edges: set[tuple[str, str]]) -> set[tuple[str, str]]:
    anc = _reach(nodes, edges)
    kept = set()
    for a, b in edges:
        # drop a->b when some other predecessor of b is reachable from a
        if not any(c != a and a in anc[c] for (c, d) in edges if d == b):
            kept.add((a, b))
    return kept


def compile_plan(plan: Plan, registry: Registry) -> ExecutableGraph:
    """Normalize a checked plan into the executable dependency graph."""
    if not plan.is_acyclic():
        raise CompileError("plan has a cycle")
    for n in plan.nodes:
        if n.agent not in registry:
            raise CompileError(f"unknown agent {n.agent}")
    agent = {n.id: n.agent for n in plan.nodes}
    ids = set(agent)
    edges = set(plan.edges)
    anc = _reach(ids, edges)
    parser = [k for k, a in agent.items() if a == "DocumentParser"]
    middles = {k for k, a in agent.items() if a in MIDDLE_AGENTS}

    # defense in depth: re-check the invariants the planner enforces
    for k, a in agent.items():
        spec = registry.lookup(a)
        consumes = any(
            s.type in registry.types and "ParsedInvoice" in registry.types.ancestors(s.type) for s in spec.inputs
        )
        if consumes and a != "DocumentParser" and not any(p in anc[k] for p in parser):
            raise CompileError(f"{a} consumes extracted fields but is not downstream of DocumentParser")
        if a in SINK_AGENTS:
            missing = sorted(agent[m] for m in middles if m not in anc[k])
            if missing:
                raise CompileError(f"{a} does not depend on upstream checks {', '.join(missing)}")

    # parallelize the middle checks; everything after them waits for each one
    new_edges = {(a, b) for a, b in edges if not (a in middles and b in middles)}
    for k in ids:
        for up in anc[k]:
            if k in middles and up not in middles:
                new_edges.add((up, k))
            elif k not in middles and up in middles:
                new_edges.add((up, k))
    new_edges = _transitive_reduction(ids, new_edges)
    new_anc = _reach(ids, new_edges)
    bindings = {n.id: dict(n.bindings) for n in plan.nodes}
    for k, bs in bindings.items():
        for slot, b in bs.items():
            if b.source != TASK_SOURCE and b.source not in new_anc[k]:
                raise CompileError(f"binding {k}.{slot} lost its upstream source {b.source}")
    return ExecutableGraph(agent, bindings, new_edges, plan)


@dataclass
class NodeEvent:
    node: str
    agent: str
    phase: str  # dispatched | completed | failed
    wave: int
    started_at: str = ""
    ended_at: str = ""
    duration_ms: float = 0.0
    inputs: Any = None
    outputs: Any = None
    error: str = ""

    def to_json(self) -> dict[str, Any]:
        return {
            "node": self.node,
            "agent": self.agent,
            "phase": self.phase,
            "wave": self.wave,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
            "duration_ms": self.duration_ms,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "error": self.error,
        }


@dataclass
class ExecutionState:
    graph: ExecutableGraph
    limit: int = 4
    value_store: dict[tuple[str, str], Any] = field(default_factory=dict)
    status: dict[str, str] = field(default_factory=dict)
    injected_edges: list[tuple[str, str, str]] = field(default_factory=list)
    skip_reasons: dict[str, str] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)
    waves: list[list[str]] = field(default_factory=list)
    signals: list[tuple[str, str]] = field(default_factory=list)
    gate_checks: list[dict[str, Any]] = field(default_factory=list)

    def __post_init__(self) -> None:
        for n in self.graph.nodes:
            self.status.setdefault(n, "pending")

    def all_edges(self) -> set[tuple[str, str]]:
        return self.graph.edges | {(a, b) for a, b, _ in self.injected_edges}

    def preds(self, node: str) -> set[str]:
        return {a for a, b in self.all_edges() if b == node}

    def resolved(self, node: str) -> bool:
        st = self.status[node]
        return st == "done" or (st == "skipped" and self.skip_reasons.get(node) in RESOLVED_SKIPS)

    @property
    def readiness(self) -> set[str]:
        return {n for n, st in self.status.items() if st == "pending" and all(self.resolved(p) for p in self.preds(n))}

    def outputs_of(self, node: str) -> dict[str, Any]:
        return {slot: v for (n, slot), v in self.value_store.items() if n == node}

    def blocking_violations(self) -> list[Any]:
        found = []
        for key in sorted(self.value_store):
            hook = getattr(self.value_store[key], "blocking_violations", None)
            if callable(hook):
                found.extend(hook())
        return found

    def terminal(self) -> bool:
        return all(st in ("done", "failed", "skipped") for st in self.status.values())

    def to_json(self) -> dict[str, Any]:
        """Final state; carries no timing data so replays compare byte-equal."""
        return {
            "status": dict(sorted(self.status.items())),
            "value_store": {f"{n}.{s}": to_jsonable(v) for (n, s), v in sorted(self.value_store.items())},
            "injected_edges": [list(e) for e in self.injected_edges],
            "skip_reasons": dict(sorted(self.skip_reasons.items())),
            "errors": dict(sorted(self.errors.items())),
            "waves": self.waves,
            "signals": [list(s) for s in self.signals],
            "gate_checks": self.gate_checks,
        }


def inject_guard(state: ExecutionState, signal: str, registry: Registry, source: str = "") -> ExecutionState:
    """Apply a guard signal at a completion boundary."""
    if signal not in SIGNALS:
        raise ValueError(f"unknown guard signal {signal!r}")
    g = state.graph
    if signal == "risk_low":
        for n, a in sorted(g.nodes.items()):
            if a in registry and registry.lookup(a).optional and state.status[n] == "pending":
                state.status[n] = "skipped"
                state.skip_reasons[n] = "bypass"
        state.signals.append((signal, source))
        return state

    sinks = [n for n, a in sorted(g.nodes.items()) if a in SINK_AGENTS]
    raced = [n for n in sinks if state.status[n] in ("running", "done")]
    if raced:
        raise InjectionRaceError(f"sink {raced[0]} already dispatched")
    targets = [n for n in sinks if state.status[n] == "pending"]
    state.signals.append((signal, source))
    if not targets or GUARD_AGENT not in registry or GUARD_AGENT in g.nodes.values():
        return state
    spec = registry.lookup(GUARD_AGENT)
    bindings: dict[str, Binding] = {}
    feeders: set[str] = set()
    for slot in spec.inputs:
        producer = None
        for n in sorted(g.nodes, key=lambda k: (-stage_rank(g.nodes[k]), k)):
            if state.status[n] != "done":
                continue
            for out in registry.lookup(g.nodes[n]).outputs:
                if registry.compatible(out.type, slot.type):
                    producer = (n, out.name)
                    break
            if producer:
                break
        if producer is None:
            # nothing to verify against; leave the plan as it is
            return state
        bindings[slot.name] = Binding(*producer)
        feeders.add(producer[0])
    node_id = GUARD_AGENT
    g.nodes[node_id] = GUARD_AGENT
    g.bindings[node_id] = bindings
    state.status[node_id] = "pending"
    for f in sorted(feeders | ({source} if source else set())):
        state.injected_edges.append((f, node_id, signal))
    for t in targets:
        state.injected_edges.append((node_id, t, signal))
    return state


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class Executor:
    """Runs a compiled graph against the registry's bound backends."""

    def __init__(
        self,
        registry: Registry,
        limit: int = 4,
        serial: bool = False,
        context_for: Optional[Callable[[str, Mapping[str, Mapping[str, Any]]], Any]] = None,
    ):
        if limit < 1:
            raise ValueError("concurrency limit must be >= 1")
        self.registry = registry
        self.limit = limit
        self.serial = serial
        self.context_for = context_for or (lambda node, upstream: upstream)
        self._locks: dict[str, threading.Lock] = {}

    def _upstream(self, state: ExecutionState, node: str) -> dict[str, dict[str, Any]]:
        anc = _reach(set(state.graph.nodes), state.all_edges())[node]
        return {state.graph.nodes[a]: state.outputs_of(a) for a in sorted(anc) if state.status[a] == "done"}

    def _inputs(self, state: ExecutionState, node: str, task: Any) -> Optional[dict[str, Any]]:
        values: dict[str, Any] = {}
        for slot, b in state.graph.bindings[node].items():
            if b.source == TASK_SOURCE:
                values[slot] = task
            elif (b.source, b.slot) in state.value_store:
                values[slot] = state.value_store[(b.source, b.slot)]
            else:
                return None
        return values

    def _invoke(self, node: str, agent: str, inputs: dict[str, Any], ctx: Any) -> tuple[str, Any, str, str, float]:
        spec = self.registry.lookup(agent)
        backend = self.registry.backend(agent)
        started = _now()
        t0 = time.perf_counter()
        try:
            problems = self.registry.check_preconditions(spec, inputs)
            if problems:
                raise ValueError("; ".join(problems))
            if getattr(backend, "reentrant", True):
                out = backend.invoke(spec, inputs, ctx)
            else:
                lock = self._locks.setdefault(agent, threading.Lock())
                with lock:
                    out = backend.invoke(spec, inputs, ctx)
            problems = self.registry.check_values(spec, out)
            if problems:
                raise ValueError("; ".join(problems))
            result: tuple[str, Any] = ("completed", out)
        except Exception as exc:  # recorded, never raised past run
            result = ("failed", f"{type(exc).__name__}: {exc}")
        return result[0], result[1], started, _now(), round((time.perf_counter() - t0) * 1000, 3)

    def run(self, graph: ExecutableGraph, task: Any) -> tuple[ExecutionState, list[NodeEvent]]:
        # guards grow the graph; keep the caller's compiled copy untouched
        graph = graph.copy()
        state = ExecutionState(graph, self.limit)
        events: list[NodeEvent] = []
        pool = None if self.serial else ThreadPoolExecutor(max_workers=self.limit)
        wave_no = 0
        try:
            while not state.terminal():
                self._cascade(state)
                ready = sorted(state.readiness, key=lambda n: (stage_rank(graph.nodes[n]), n))
                if not ready:
                    if state.terminal():
                        break
                    # nothing can make progress: stranded nodes are skipped
                    for n, st in state.status.items():
                        if st == "pending":
                            state.status[n] = "skipped"
                            state.skip_reasons[n] = "unreachable"
                    break
                wave: list[tuple[str, dict[str, Any], Any]] = []
                for n in ready:
                    if len(wave) == self.limit:
                        break
                    agent = graph.nodes[n]
                    spec = self.registry.lookup(agent)
                    if spec.side_effecting:
                        blocking = state.blocking_violations()
                        state.gate_checks.append({"node": n, "blocking": sorted({v.kind for v in blocking})})
                        if blocking:
                            state.status[n] = "skipped"
                            state.skip_reasons[n] = "governance_block"
                            continue
                    inputs = self._inputs(state, n, task)
                    if inputs is None:
                        state.status[n] = "skipped"
                        state.skip_reasons[n] = "missing_input"
                        continue
                    for p in state.preds(n):
                        assert state.resolved(p), f"{n} dispatched before {p} resolved"
                    state.status[n] = "running"
                    ctx = self.context_for(n, self._upstream(state, n))
                    wave.append((n, inputs, ctx))
                if not wave:
                    continue
                state.waves.append([n for n, _, _ in wave])
                for n, inputs, _ in wave:
                    events.append(NodeEvent(n, graph.nodes[n], "dispatched", wave_no, inputs=to_jsonable(inputs)))
                if pool is None:
                    results = [self._invoke(n, graph.nodes[n], i, c) for n, i, c in wave]
                else:
                    futures = [pool.submit(self._invoke, n, graph.nodes[n], i, c) for n, i, c in wave]
                    results = [f.result() for f in futures]
                # barrier: apply completions in dispatch order
                for (n, inputs, _), (phase, payload, started, ended, ms) in zip(wave, results):
                    ev = NodeEvent(n, graph.nodes[n], phase, wave_no, started, ended, ms, to_jsonable(inputs))
                    if phase == "completed":
                        state.status[n] = "done"
                        for slot, value in payload.items():
                            state.value_store[(n, slot)] = value
                        ev.outputs = to_jsonable(payload)
                    else:
                        state.status[n] = "failed"
                        state.errors[n] = payload
                        ev.error = payload
                    events.append(ev)
                for n, _, _ in wave:
                    if state.status[n] != "done":
                        continue
                    for value in state.outputs_of(n).values():
                        hook = getattr(value, "guard_signals", None)
                        if callable(hook):
                            for sig in sorted(hook()):
                                inject_guard(state, sig, self.registry, source=n)
                wave_no += 1
        finally:
            if pool is not None:
                pool.shutdown(wait=True)
        return state, events

    def _cascade(self, state: ExecutionState) -> None:
        changed = True
        while changed:
            changed = False
            for n, st in state.status.items():
                if st != "pending":
                    continue
                for p in state.preds(n):
                    if state.status[p] == "failed" or (
                        state.status[p] == "skipped" and state.skip_reasons.get(p) not in RESOLVED_SKIPS
                    ):
                        state.status[n] = "skipped"
                        state.skip_reasons[n] = "cascade"
                        changed = True
                        break


def run(
    graph: ExecutableGraph,
    task: Any,
    registry: Registry,
    *,
    limit: int = 4,
    serial: bool = False,
    context_for: Optional[Callable[[str, Mapping[str, Mapping[str, Any]]], Any]] = None,
) -> tuple[ExecutionState, list[NodeEvent]]:
    return Executor(registry, limit, serial, context_for).run(graph, task)
