"""Validator rules, failure explanation, scoped merge, and the bounded repair loop."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from decimal import Decimal
from typing import Any, Callable, Iterable, Optional

from ..contracts import ISO_4217
from .documents import FIELDS, REQUIRED_FIELDS, ExtractedInvoice, SyntheticDocument
from .parser import FIELD_NORMALIZER, ROI_ZONES, FieldHint, RepairHints, parse

DEFAULT_EPSILON = Decimal("0.01")


class MergeScopeError(ValueError):
    pass


@dataclass(frozen=True)
class RuleFailure:
    rule: str
    fields: tuple[str, ...]
    message: str

    def to_json(self) -> dict[str, Any]:
        return {"rule": self.rule, "fields": list(self.fields), "message": self.message}


@dataclass(frozen=True)
class ValidatorReport:
    verdict: str
    failed_rules: tuple[RuleFailure, ...]
    min_confidence: float
    tau_c: float

    def __post_init__(self) -> None:
        expected = "pass" if not self.failed_rules and self.min_confidence >= self.tau_c else "fail"
        if self.verdict != expected:
            raise ValueError(f"verdict {self.verdict!r} inconsistent with findings")

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def implicated_fields(self) -> frozenset[str]:
        return frozenset(f for r in self.failed_rules for f in r.fields)

    def rules(self) -> tuple[str, ...]:
        return tuple(r.rule for r in self.failed_rules)

    def to_json(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict,
            "failed_rules": [r.to_json() for r in self.failed_rules],
            "min_confidence": self.min_confidence,
            "tau_c": self.tau_c,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "ValidatorReport":
        rules = tuple(RuleFailure(r["rule"], tuple(r["fields"]), r["message"]) for r in data["failed_rules"])
        return cls(data["verdict"], rules, data["min_confidence"], data["tau_c"])


def validate(z: ExtractedInvoice, tau_c: float, epsilon: Decimal = DEFAULT_EPSILON) -> ValidatorReport:
    if not 0 < tau_c <= 1:
        raise ValueError("tau_c must lie in (0, 1]")
    failures: list[RuleFailure] = []

    missing = tuple(f for f in REQUIRED_FIELDS if z.get(f) is None)
    if missing:
        failures.append(RuleFailure("R1", missing, f"required fields missing: {', '.join(missing)}"))

    if z.line_items and z.total is not None:
        items = sum(z.line_items, Decimal("0"))
        if abs(items - z.total) > epsilon:
            failures.append(RuleFailure("R2", ("total",), f"line items sum {items} != total {z.total}"))

    if z.issue_date is not None and z.due_date is not None and z.issue_date > z.due_date:
        failures.append(RuleFailure("R3", ("issue_date", "due_date"), "issue date after due date"))

    if z.currency is None:
        failures.append(RuleFailure("R4", ("currency",), "currency not recognized"))
    elif z.currency not in ISO_4217:
        failures.append(RuleFailure("R4", ("currency",), f"currency {z.currency} is not ISO-4217"))

    low = tuple(f for f in z.present_fields() if z.confidence[f] < tau_c)
    if low:
        failures.append(RuleFailure("R5", low, f"confidence below {tau_c}: {', '.join(low)}"))

    min_conf = z.min_confidence()
    verdict = "pass" if not failures and min_conf >= tau_c else "fail"
    return ValidatorReport(verdict, tuple(failures), min_conf, tau_c)


def _hint_for(name: str, normalizer: Optional[str] = None) -> FieldHint:
    return FieldHint(
        roi=ROI_ZONES[name],
        relaxed=True,
        normalizer=normalizer or FIELD_NORMALIZER[name],
        schema_prompt=f"schema:{name}",
    )


def explain(report: ValidatorReport, z: ExtractedInvoice) -> RepairHints:
    """Turn failed rules into hints that touch only the implicated fields."""
    hints: dict[str, FieldHint] = {}
    for failure in report.failed_rules:
        for name in failure.fields:
            if name in hints:
                continue
            if failure.rule == "R2":
                hints[name] = _hint_for(name, "amount")
            elif failure.rule == "R3":
                hints[name] = _hint_for(name, "date")
            elif failure.rule == "R4":
                hints[name] = _hint_for(name, "currency")
            else:
                hints[name] = _hint_for(name)
    return RepairHints(hints)


def merge(base: ExtractedInvoice, patch: ExtractedInvoice, implicated: Iterable[str]) -> ExtractedInvoice:
    """Overwrite exactly the implicated fields of ``base`` with ``patch`` (absence included)."""
    implicated = frozenset(implicated)
    stray = set(patch.present_fields()) - implicated
    if stray:
        raise MergeScopeError(f"patch touches non-implicated fields: {sorted(stray)}")
    updates = {f: patch.get(f) for f in implicated if f in FIELDS}
    confidence = {f: c for f, c in base.confidence.items() if f not in implicated}
    confidence.update({f: patch.confidence[f] for f in implicated if patch.get(f) is not None})
    return replace(base, **updates, confidence=confidence)


@dataclass(frozen=True)
class RepairIteration:
    index: int
    report: ValidatorReport
    hints: RepairHints
    overwritten: tuple[str, ...]

    def to_json(self) -> dict[str, Any]:
        return {
            "iteration": self.index,
            "report": self.report.to_json(),
            "hints": self.hints.to_json(),
            "overwritten": list(self.overwritten),
        }


@dataclass
class RepairTrace:
    iterations: list[RepairIteration] = field(default_factory=list)
    parser_calls: int = 0
    validator_calls: int = 0
    final_report: Optional[ValidatorReport] = None
    exit: str = ""

    @property
    def repair_count(self) -> int:
        return len(self.iterations)

    def overwritten_fields(self) -> frozenset[str]:
        return frozenset(f for it in self.iterations for f in it.overwritten)

    def implicated_fields(self) -> frozenset[str]:
        return frozenset(f for it in self.iterations for f in it.report.implicated_fields())

    def to_json(self) -> dict[str, Any]:
        return {
            "iterations": [it.to_json() for it in self.iterations],
            "parser_calls": self.parser_calls,
            "validator_calls": self.validator_calls,
            "final_report": self.final_report.to_json() if self.final_report else None,
            "exit": self.exit,
        }


@dataclass(frozen=True)
class ValidatedInvoice(ExtractedInvoice):
    """Extraction that went through the validator; ``fallback`` marks the safe path."""

    report: Optional[ValidatorReport] = None
    repair: Optional[RepairTrace] = field(default=None, compare=False)
    fallback: bool = False

    @classmethod
    def from_outcome(cls, outcome: "RepairOutcome") -> "ValidatedInvoice":
        z = outcome.invoice
        base = {f: z.get(f) for f in FIELDS}
        return cls(
            **base,
            line_items=z.line_items,
            confidence=dict(z.confidence),
            report=outcome.trace.final_report,
            repair=outcome.trace,
            fallback=isinstance(outcome, FallbackResult),
        )

    def plain(self) -> ExtractedInvoice:
        return ExtractedInvoice(**{f: self.get(f) for f in FIELDS}, line_items=self.line_items, confidence=dict(self.confidence))

    def to_json(self) -> dict[str, Any]:
        out = super().to_json()
        out["verdict"] = self.report.verdict if self.report else None
        out["fallback"] = self.fallback
        out["type_signatures"] = self.type_signatures()
        return out


@dataclass(frozen=True)
class RepairOutcome:
    invoice: ExtractedInvoice
    trace: RepairTrace


@dataclass(frozen=True)
class FallbackResult(RepairOutcome):
    """Budget exhausted: no approvals downstream, full trace kept for review."""

    escalation: str = "human_review"


Parser = Callable[[SyntheticDocument, Optional[RepairHints]], ExtractedInvoice]
Validator = Callable[[ExtractedInvoice, float], ValidatorReport]


def repair_loop(
    doc: SyntheticDocument,
    tau_c: float,
    L_max: int,
    *,
    parser: Parser = parse,
    validator: Optional[Validator] = None,
    epsilon: Decimal = DEFAULT_EPSILON,
    initial: Optional[ExtractedInvoice] = None,
) -> RepairOutcome:
    """Bounded validate -> explain -> targeted re-parse -> merge iteration.

    ``initial`` lets a caller hand over a parse it already ran; it is counted
    as the first parser call either way.
    """
    if L_max < 0:
        raise ValueError("L_max must be >= 0")
    if validator is None:
        validator = lambda z, t: validate(z, t, epsilon)  # noqa: E731
    trace = RepairTrace()
    z = initial if initial is not None else parser(doc, None)
    trace.parser_calls += 1

    report: Optional[ValidatorReport] = None
    for ell in range(1, L_max + 1):
        report = validator(z, tau_c)
        trace.validator_calls += 1
        if report.passed:
            break
        hints = explain(report, z)
        patch = parser(doc, hints)
        trace.parser_calls += 1
        merged = merge(z, patch, hints.fields.keys())
        trace.iterations.append(RepairIteration(ell, report, hints, tuple(sorted(hints))))
        z = merged
        report = None

    if report is None:
        # z changed since the last check (or the budget was zero)
        report = validator(z, tau_c)
        trace.validator_calls += 1
    trace.final_report = report
    if report.passed:
        trace.exit = "pass"
        return RepairOutcome(z, trace)
    trace.exit = "budget"
    return FallbackResult(z, trace)
