from __future__ import annotations

import pytest

from polaris.contracts import (
    AgentSpec,
    ContractError,
    DuplicateAgentError,
    Registry,
    Slot,
    UnknownAgentError,
    UnknownTypeError,
    build_type_graph,
    catalog_specs,
)


@pytest.fixture
def types():
    return build_type_graph()


def test_catalog_has_thirteen_agents(types):
    reg = Registry(types)
    for spec in catalog_specs():
        reg.register(spec)
    assert len(reg) == 13


def test_extension_adds_guard_agent(types):
    ids = {s.id for s in catalog_specs(include_extensions=True)}
    assert "ExtraVerification" in ids
    assert len(ids) == 14


def test_register_then_lookup_round_trip(types):
    spec = next(s for s in catalog_specs() if s.id == "DocumentParser")
    reg = Registry(types).register(spec)
    assert reg.lookup("DocumentParser") is spec


def test_duplicate_registration_rejected(types):
    spec = next(s for s in catalog_specs() if s.id == "DocumentParser")
    reg = Registry(types).register(spec)
    with pytest.raises(DuplicateAgentError):
        reg.register(spec)


def test_unknown_agent_lookup(types):
    with pytest.raises(UnknownAgentError):
        Registry(types).lookup("Nope")


def test_spec_with_unknown_slot_type_rejected(types):
    spec = AgentSpec("DocumentParser", "Extractor", (Slot("x", "NoSuchType"),), ())
    with pytest.raises(UnknownTypeError):
        Registry(types).register(spec)


def test_only_known_effects_may_be_side_effecting():
    with pytest.raises(ContractError):
        AgentSpec("DocumentParser", "Extractor", (), (), side_effecting=True)


@pytest.mark.parametrize(
    "out_type, in_type, expected",
    [
        ("ParsedInvoice", "ParsedInvoice", True),
        ("RawDocument", "ParsedInvoice", False),
        ("ValidatedInvoice", "ParsedInvoice", True),
        ("ParsedInvoice", "ValidatedInvoice", False),
    ],
)
def test_compatibility(types, out_type, in_type, expected):
    assert types.compatible(out_type, in_type) is expected


def test_compatibility_unknown_type(types):
    with pytest.raises(UnknownTypeError):
        types.compatible("ParsedInvoice", "Ghost")


def test_side_effecting_agents_carry_sod_groups(registry):
    effects = {a: registry.lookup(a) for a in ("APIAccess", "Scheduler", "Approval")}
    assert all(s.side_effecting for s in effects.values())
    assert len({s.sod_group for s in effects.values()}) == 3


def test_output_predicate_violation_reported(registry):
    from polaris.extraction.documents import ExtractedInvoice

    spec = registry.lookup("DocumentParser")
    bad = ExtractedInvoice(invoice_number="A", confidence={"invoice_number": 1.5})
    assert registry.check_values(spec, {"parsed": bad}) == ["postcondition confidence_bounded failed"]
    assert registry.check_values(spec, {"wrong": bad})
