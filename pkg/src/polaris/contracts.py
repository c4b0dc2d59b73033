"""Agent registry: semantic types, typed I/O contracts, policy tags, backends."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date
from decimal import Decimal
from functools import lru_cache
from importlib import resources
from typing import Any, Callable, Iterable, Mapping, Optional, Protocol

import yaml

CATEGORIES = ("Normalizer", "Planning", "Selection", "Extractor", "Processor", "Reconciliation")
SIDE_EFFECT_AGENTS = frozenset({"APIAccess", "Approval", "Scheduler"})
ISO_4217 = frozenset(
    {"USD", "EUR", "GBP", "JPY", "CHF", "CAD", "AUD", "CNY", "INR", "SEK", "NOK", "DKK", "SGD", "HKD", "NZD", "MXN"}
)


class ContractError(ValueError):
    pass


class UnknownTypeError(KeyError):
    pass


class DuplicateAgentError(KeyError):
    pass


class UnknownAgentError(KeyError):
    pass


class TypeGraph:
    """Semantic types with single-inheritance subtype edges."""

    def __init__(self) -> None:
        self._super: dict[str, Optional[str]] = {}

    def register(self, name: str, supertype: Optional[str] = None) -> None:
        if supertype is not None and supertype not in self._super:
            raise UnknownTypeError(supertype)
        if name in self._super and self._super[name] != supertype:
            raise ContractError(f"type {name} already registered with another supertype")
        # a new name can't close a cycle since its supertype already exists
        self._super[name] = supertype

    def __contains__(self, name: str) -> bool:
        return name in self._super

    def names(self) -> list[str]:
        return sorted(self._super)

    def ancestors(self, name: str) -> list[str]:
        if name not in self._super:
            raise UnknownTypeError(name)
        chain = [name]
        cur = self._super[name]
        while cur is not None:
            chain.append(cur)
            cur = self._super[cur]
        return chain

    def compatible(self, out_type: str, in_type: str) -> bool:
        if in_type not in self._super:
            raise UnknownTypeError(in_type)
        return in_type in self.ancestors(out_type)


# Closed predicate set referenced by name from agent spec files. Each takes the
# slot value map of the inputs or outputs it guards.
def _values(slots: Mapping[str, Any]) -> Iterable[Any]:
    return slots.values()


def _confidences(value: Any) -> Iterable[float]:
    conf = getattr(value, "confidence", None)
    if isinstance(conf, Mapping):
        return conf.values()
    return ()


def _non_empty(slots: Mapping[str, Any]) -> bool:
    return all(v is not None and v != "" and v != {} and v != [] for v in _values(slots))


def _confidence_bounded(slots: Mapping[str, Any]) -> bool:
    return all(0.0 <= c <= 1.0 for v in _values(slots) for c in _confidences(v))


def _currency_valid(slots: Mapping[str, Any]) -> bool:
    for v in _values(slots):
        cur = getattr(v, "currency", None)
        if cur is not None and cur not in ISO_4217:
            return False
    return True


def _date_valid(slots: Mapping[str, Any]) -> bool:
    for v in _values(slots):
        for name in ("issue_date", "due_date", "payment_date"):
            d = getattr(v, name, None)
            if d is not None and not isinstance(d, date):
                return False
    return True


def _amount_valid(slots: Mapping[str, Any]) -> bool:
    for v in _values(slots):
        total = getattr(v, "total", None)
        if total is not None and (not isinstance(total, Decimal) or total < 0 or total.as_tuple().exponent < -2):
            return False
    return True


PREDICATES: dict[str, Callable[[Mapping[str, Any]], bool]] = {
    "non_empty": _non_empty,
    "confidence_bounded": _confidence_bounded,
    "currency_valid": _currency_valid,
    "date_valid": _date_valid,
    "amount_valid": _amount_valid,
}

# eligibility predicates over a TaskRecord
ELIGIBILITY: dict[str, Callable[[Any], bool]] = {
    "always": lambda task: True,
    "document_task": lambda task: task.is_document_task,
    "schedulable": lambda task: task.is_month_end or task.task_type == "event_triggered",
    "control_plane": lambda task: False,
}


@dataclass(frozen=True)
class Slot:
    name: str
    type: str


@dataclass(frozen=True)
class AgentSpec:
    id: str
    category: str
    inputs: tuple[Slot, ...]
    outputs: tuple[Slot, ...]
    preconditions: tuple[str, ...] = ()
    postconditions: tuple[str, ...] = ()
    side_effecting: bool = False
    sod_group: str = ""
    eligibility: str = "always"
    optional: bool = False
    description: str = ""

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise ContractError(f"{self.id}: unknown category {self.category!r}")
        for label, slots in (("input", self.inputs), ("output", self.outputs)):
            names = [s.name for s in slots]
            if len(names) != len(set(names)):
                raise ContractError(f"{self.id}: duplicate {label} slot names {names}")
        for pred in (*self.preconditions, *self.postconditions):
            if pred not in PREDICATES:
                raise ContractError(f"{self.id}: unknown predicate {pred!r}")
        if self.eligibility not in ELIGIBILITY:
            raise ContractError(f"{self.id}: unknown eligibility {self.eligibility!r}")
        if self.side_effecting and self.id not in SIDE_EFFECT_AGENTS:
            raise ContractError(f"{self.id}: only {sorted(SIDE_EFFECT_AGENTS)} may be side-effecting")

    def input_type(self, slot: str) -> str:
        for s in self.inputs:
            if s.name == slot:
                return s.type
        raise KeyError(f"{self.id} has no input slot {slot!r}")

    def output_type(self, slot: str) -> str:
        for s in self.outputs:
            if s.name == slot:
                return s.type
        raise KeyError(f"{self.id} has no output slot {slot!r}")

    def eligible(self, task: Any) -> bool:
        return ELIGIBILITY[self.eligibility](task)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "AgentSpec":
        return cls(
            id=data["id"],
            category=data["category"],
            inputs=tuple(Slot(n, t) for n, t in data.get("inputs", {}).items()),
            outputs=tuple(Slot(n, t) for n, t in data.get("outputs", {}).items()),
            preconditions=tuple(data.get("preconditions", ())),
            postconditions=tuple(data.get("postconditions", ())),
            side_effecting=bool(data.get("side_effecting", False)),
            sod_group=data.get("sod_group", ""),
            eligibility=data.get("eligibility", "always"),
            optional=bool(data.get("optional", False)),
            description=data.get("description", ""),
        )


class AgentBackend(Protocol):
    deterministic: bool
    reentrant: bool

    def invoke(self, spec: AgentSpec, inputs: Mapping[str, Any], ctx: Any) -> dict[str, Any]: ...


@dataclass
class FunctionBackend:
    """Adapts a plain callable ``fn(inputs, ctx) -> outputs`` to the backend protocol."""

    fn: Callable[[Mapping[str, Any], Any], dict[str, Any]]
    deterministic: bool = True
    reentrant: bool = True

    def invoke(self, spec: AgentSpec, inputs: Mapping[str, Any], ctx: Any) -> dict[str, Any]:
        return self.fn(inputs, ctx)


class OutputContractError(ContractError):
    pass


@dataclass
class Registry:
    types: TypeGraph = field(default_factory=TypeGraph)
    # semantic type name -> python class used to check runtime values
    type_bindings: dict[str, type] = field(default_factory=dict)
    _specs: dict[str, AgentSpec] = field(default_factory=dict)
    _backends: dict[str, AgentBackend] = field(default_factory=dict)

    def register(self, spec: AgentSpec, backend: Optional[AgentBackend] = None) -> "Registry":
        if spec.id in self._specs:
            raise DuplicateAgentError(spec.id)
        for slot in (*spec.inputs, *spec.outputs):
            if slot.type not in self.types:
                raise UnknownTypeError(f"{spec.id}.{slot.name}: {slot.type}")
        self._specs[spec.id] = spec
        if backend is not None:
            self._backends[spec.id] = backend
        return self

    def bind_backend(self, agent_id: str, backend: AgentBackend) -> None:
        self.lookup(agent_id)
        self._backends[agent_id] = backend

    def lookup(self, agent_id: str) -> AgentSpec:
        try:
            return self._specs[agent_id]
        except KeyError:
            raise UnknownAgentError(agent_id) from None

    def backend(self, agent_id: str) -> AgentBackend:
        try:
            return self._backends[agent_id]
        except KeyError:
            raise UnknownAgentError(f"no backend bound for {agent_id}") from None

    def by_category(self, category: str) -> list[AgentSpec]:
        return [s for s in self._specs.values() if s.category == category]

    def __contains__(self, agent_id: str) -> bool:
        return agent_id in self._specs

    def __len__(self) -> int:
        return len(self._specs)

    def ids(self) -> list[str]:
        return list(self._specs)

    def compatible(self, out_type: str, in_type: str) -> bool:
        return self.types.compatible(out_type, in_type)

    def check_values(self, spec: AgentSpec, outputs: Mapping[str, Any]) -> list[str]:
        """Problems with a backend's output map; empty when it honors the contract."""
        problems = []
        declared = {s.name for s in spec.outputs}
        if set(outputs) != declared:
            problems.append(f"output slots {sorted(outputs)} != declared {sorted(declared)}")
            return problems
        for slot in spec.outputs:
            cls = self.type_bindings.get(slot.type)
            if cls is not None and not isinstance(outputs[slot.name], cls):
                problems.append(f"slot {slot.name} is {type(outputs[slot.name]).__name__}, expected {slot.type}")
        for pred in spec.postconditions:
            if not PREDICATES[pred](outputs):
                problems.append(f"postcondition {pred} failed")
        return problems

    def check_preconditions(self, spec: AgentSpec, inputs: Mapping[str, Any]) -> list[str]:
        return [f"precondition {p} failed" for p in spec.preconditions if not PREDICATES[p](inputs)]


@lru_cache(maxsize=1)
def catalog_document() -> dict[str, Any]:
    text = resources.files("polaris.data").joinpath("agents.yaml").read_text()
    return yaml.safe_load(text)


def build_type_graph(doc: Optional[Mapping[str, Any]] = None) -> TypeGraph:
    doc = doc or catalog_document()
    graph = TypeGraph()
    pending = dict(doc["types"])
    # register parents before children regardless of file order
    while pending:
        progressed = False
        for name, parent in list(pending.items()):
            if parent is None or parent in graph:
                graph.register(name, parent)
                del pending[name]
                progressed = True
        if not progressed:
            raise ContractError(f"cyclic or dangling supertypes: {sorted(pending)}")
    return graph


def catalog_specs(include_extensions: bool = False) -> list[AgentSpec]:
    doc = catalog_document()
    entries = list(doc["agents"])
    if include_extensions:
        entries += list(doc.get("extensions", []))
    return [AgentSpec.from_dict(e) for e in entries]
