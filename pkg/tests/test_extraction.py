from __future__ import annotations

import random
from dataclasses import replace
from datetime import date
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polaris.extraction.documents import (
    REQUIRED_FIELDS,
    ExtractedInvoice,
    corrupt_char_substitution,
    corrupt_decimal_swap,
    corrupt_label_swap,
    corrupt_line_shift,
    find_label_line,
    render,
    with_lines,
)
from polaris.extraction.parser import FieldHint, RepairHints, confidence_for, parse
from polaris.extraction.validation import (
    FallbackResult,
    MergeScopeError,
    ValidatedInvoice,
    explain,
    merge,
    repair_loop,
    validate,
)

from conftest import sample_facts

TAU = 0.7


def corrupted(doc, fn, name, seed=0):
    lines = list(doc.lines)
    ev = fn(lines, name, random.Random(seed))
    assert ev is not None
    return with_lines(doc, lines, [ev])


def set_line(doc, name, value):
    lines = list(doc.lines)
    idx = find_label_line(lines, name)
    lines[idx] = f"{lines[idx].partition(':')[0]}: {value}"
    return with_lines(doc, lines, [])


def full(**overrides):
    base = dict(
        invoice_number="INV-100200",
        issue_date=date(2024, 5, 1),
        due_date=date(2024, 5, 31),
        vendor="Acme Corp",
        total=Decimal("150.00"),
        currency="USD",
        line_items=(Decimal("100.00"), Decimal("50.00")),
    )
    base.update(overrides)
    present = [k for k, v in base.items() if k != "line_items" and v is not None]
    return ExtractedInvoice(**base, confidence={k: 1.0 for k in present})


def test_clean_document_parses_exactly(clean_doc):
    facts = sample_facts()
    z = parse(clean_doc)
    assert all(z.get(f) is not None for f in REQUIRED_FIELDS)
    assert z.total == facts.total and z.vendor == facts.vendor and z.issue_date == facts.issue_date
    assert set(z.confidence.values()) == {1.0}


def test_impossible_date_stays_absent(clean_doc):
    doc = set_line(clean_doc, "issue_date", "2024/13/45")
    hints = RepairHints({"issue_date": FieldHint(normalizer="date")})
    assert parse(doc).issue_date is None
    assert parse(doc, hints).issue_date is None


def test_vendor_shift_recovered_with_roi_hint(clean_doc):
    doc = corrupted(clean_doc, corrupt_line_shift, "vendor", seed=3)
    assert parse(doc).vendor is None
    z = repair_loop(doc, TAU, 3).invoice
    assert z.vendor == sample_facts().vendor


def test_confidence_penalty_schedule():
    # 1 - 0.15 per corruption cue, floor 0.1
    assert [confidence_for(k) for k in range(8)] == [1.0, 0.85, 0.7, 0.55, 0.4, 0.25, 0.1, 0.1]


def test_consistent_invoice_passes():
    assert validate(full(), TAU).passed


def test_line_item_mismatch_fails_r2_on_total():
    report = validate(full(total=Decimal("150.00"), line_items=(Decimal("100.00"),)), TAU)
    assert report.rules() == ("R2",)
    assert report.implicated_fields() == {"total"}
    assert explain(report, full()).fields["total"].normalizer == "amount"


def test_low_vendor_confidence_fails_r5():
    z = replace(full(), confidence={**full().confidence, "vendor": 0.55})
    report = validate(z, TAU)
    assert report.rules() == ("R5",)
    assert report.implicated_fields() == {"vendor"}


def test_missing_vendor_hint_uses_roi_and_relaxed():
    z = full(vendor=None)
    report = validate(z, TAU)
    assert "R1" in report.rules()
    hint = explain(report, z).fields["vendor"]
    assert hint.roi is not None and hint.relaxed


def test_date_rules():
    assert validate(full(due_date=date(2024, 4, 1)), TAU).rules() == ("R3",)
    z = replace(full(), confidence={**full().confidence, "issue_date": 0.4})
    assert set(explain(validate(z, TAU), z).fields) == {"issue_date"}


def test_unknown_currency_fails_r4():
    assert "R4" in validate(full(currency="XYZ"), TAU).rules()


def test_merge_identity_and_scope():
    base = full()
    assert merge(base, ExtractedInvoice(), ()) == base
    patch = ExtractedInvoice(issue_date=date(2024, 5, 2), confidence={"issue_date": 0.85})
    merged = merge(base, patch, {"issue_date"})
    assert merged.issue_date == date(2024, 5, 2)
    assert {f: merged.get(f) for f in REQUIRED_FIELDS if f != "issue_date"} == {f: base.get(f) for f in REQUIRED_FIELDS if f != "issue_date"}
    with pytest.raises(MergeScopeError):
        merge(base, ExtractedInvoice(vendor="Evil", confidence={"vendor": 1.0}), {"issue_date"})


def test_clean_document_needs_no_repair(clean_doc):
    out = repair_loop(clean_doc, TAU, 3)
    assert not isinstance(out, FallbackResult)
    assert out.trace.repair_count == 0 and out.trace.validator_calls == 1


def test_reversible_date_corruption_repaired_in_one_iteration(clean_doc):
    doc = corrupted(clean_doc, corrupt_char_substitution, "issue_date", seed=1)
    out = repair_loop(doc, TAU, 3)
    assert out.trace.exit == "pass"
    assert out.trace.repair_count == 1
    assert out.invoice.issue_date == sample_facts().issue_date


def test_destroyed_vendor_falls_back_after_budget(clean_doc):
    doc = corrupted(clean_doc, corrupt_char_substitution, "vendor", seed=2)
    out = repair_loop(doc, TAU, 3)
    assert isinstance(out, FallbackResult)
    assert out.trace.repair_count == 3
    assert out.trace.validator_calls == 4 and out.trace.parser_calls == 4
    assert ValidatedInvoice.from_outcome(out).fallback


def test_zero_budget_validates_once(clean_doc):
    doc = corrupted(clean_doc, corrupt_label_swap, "total", seed=0)
    out = repair_loop(doc, TAU, 0)
    assert out.trace.validator_calls == 1 and out.trace.parser_calls == 1
    with pytest.raises(ValueError):
        repair_loop(doc, TAU, -1)


REVERSIBLE = {
    "label_swap": (corrupt_label_swap, ["invoice_number", "vendor", "issue_date", "total", "currency"]),
    "char_substitution": (corrupt_char_substitution, ["invoice_number", "issue_date", "total"]),
    "decimal_swap": (corrupt_decimal_swap, ["total"]),
    "line_shift": (corrupt_line_shift, ["vendor", "issue_date", "total"]),
}


@settings(max_examples=150, deadline=None)
@given(
    picks=st.lists(st.tuples(st.sampled_from(sorted(REVERSIBLE)), st.integers(0, 4)), max_size=3),
    seed=st.integers(0, 10_000),
    budget=st.integers(0, 4),
    total=st.decimals(min_value=Decimal("10.00"), max_value=Decimal("99999.99"), places=2),
)
def test_loop_bound_and_scoped_overwrites(picks, seed, budget, total):
    doc = render(sample_facts(total=str(total)))
    rng = random.Random(seed)
    lines, events, shifted = list(doc.lines), [], False
    for cls, k in picks:
        fn, fields = REVERSIBLE[cls]
        if cls == "line_shift":
            if shifted:
                continue
            shifted = True
        ev = fn(lines, fields[k % len(fields)], rng)
        if ev is not None:
            events.append(ev)
    noisy = with_lines(doc, lines, events)
    out = repair_loop(noisy, TAU, budget)
    assert out.trace.validator_calls <= budget + 1
    assert out.trace.parser_calls <= budget + 1
    assert out.trace.repair_count <= budget
    assert out.trace.overwritten_fields() <= out.trace.implicated_fields()
    if out.trace.exit == "pass":
        assert out.invoice.total == doc.line_items[0][1] + doc.line_items[1][1]
