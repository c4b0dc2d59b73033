from __future__ import annotations

from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polaris.config import EngineConfig
from polaris.planner import (
    Binding,
    Exemplar,
    ExemplarBank,
    NoFeasiblePlanError,
    Plan,
    PlanNode,
    Signature,
    auto_bind,
    chain_plan,
    core_chain,
    equivalence_key,
    extra_nodes,
    generate_candidates,
    prior_score,
    required_agents,
    type_check,
)
from polaris.task_model import RawInput, normalize

from conftest import invoice_raw

STANDARD = ("DocumentParser", "DataValidator", "PolicyRetrieval", "AnomalyDetection", "RiskControl", "Approval")


def relabel(plan: Plan, mapping: dict[str, str]) -> Plan:
    nodes = tuple(
        PlanNode(mapping[n.id], n.agent, {k: Binding(mapping.get(b.source, b.source), b.slot) for k, b in n.bindings.items()})
        for n in reversed(plan.nodes)
    )
    return Plan(nodes, tuple((mapping[a], mapping[b]) for a, b in plan.edges))


def test_safe_chain_is_feasible(registry, invoice_task):
    plan = chain_plan(["DocumentParser", "DataValidator", "PolicyRetrieval", "Approval"], registry)
    assert type_check(plan, registry, invoice_task).feasible


def test_approval_before_validator_flags_order(registry, invoice_task):
    plan = chain_plan(["DocumentParser", "PolicyRetrieval", "Approval", "DataValidator"], registry)
    assert "order_validate_first" in type_check(plan, registry, invoice_task).codes()


def test_incompatible_binding_flagged(registry, invoice_task):
    plan = chain_plan(["DocumentParser", "DataValidator"], registry)
    broken = Plan(
        (plan.nodes[0], PlanNode("DataValidator", "DataValidator", {"parsed": Binding("task")})),
        plan.edges,
    )
    assert "type_incompatible" in type_check(broken, registry, invoice_task).codes()


def test_unbound_and_cyclic_plans(registry, invoice_task):
    bare = Plan((PlanNode("DataValidator", "DataValidator"),), ())
    assert "unbound_input" in type_check(bare, registry, invoice_task).codes()
    cyc = Plan((PlanNode("a", "DocumentParser"), PlanNode("b", "DataValidator")), (("a", "b"), ("b", "a")))
    assert type_check(cyc, registry, invoice_task).codes() == ["cycle"]


def test_effect_without_policy_flagged(registry, invoice_task):
    plan = chain_plan(["DocumentParser", "DataValidator", "RiskControl", "Approval"], registry)
    assert "order_policy_before_effect" in type_check(plan, registry, invoice_task).codes()


def test_month_end_needs_scheduler(registry, month_end_task):
    plan = chain_plan(list(STANDARD), registry)
    assert "month_end_unscheduled" in type_check(plan, registry, month_end_task).codes()
    backwards = chain_plan(list(STANDARD) + ["ReportGenerator", "Scheduler"], registry)
    assert "order_schedule_before_report" in type_check(backwards, registry, month_end_task).codes()


def test_duplicate_sod_group_flagged(registry, invoice_task):
    plan = chain_plan(list(STANDARD), registry)
    dup = Plan(plan.nodes + (PlanNode("Approval2", "Approval", dict(plan.node("Approval").bindings)),), plan.edges + (("Approval", "Approval2"),))
    codes = type_check(dup, registry, invoice_task).codes()
    assert "duplicate_agent" in codes and "sod_conflict" in codes


def test_relabeled_plans_share_a_key(registry):
    plan = chain_plan(list(STANDARD), registry)
    mapping = {n.id: f"n{i}" for i, n in enumerate(plan.nodes)}
    assert equivalence_key(relabel(plan, mapping)) == equivalence_key(plan)


def test_one_middle_edge_changes_the_key(registry):
    nodes = [(a, a) for a in STANDARD]
    par = [("DocumentParser", "DataValidator")] + [("DataValidator", m) for m in ("PolicyRetrieval", "AnomalyDetection", "RiskControl")]
    par += [(m, "Approval") for m in ("PolicyRetrieval", "AnomalyDetection", "RiskControl")]
    a = auto_bind(nodes, par, registry)
    b = auto_bind(nodes, par + [("PolicyRetrieval", "RiskControl")], registry)
    assert equivalence_key(a) != equivalence_key(b)


def test_record_matcher_position_changes_the_key(registry):
    # hand-derived: serialized chains differ in both linearization and edge set
    before = chain_plan(["DocumentParser", "DataValidator", "RecordMatcher", "PolicyRetrieval", "RiskControl", "Approval"], registry)
    after = chain_plan(["DocumentParser", "DataValidator", "PolicyRetrieval", "RecordMatcher", "RiskControl", "Approval"], registry)
    kb, ka = equivalence_key(before), equivalence_key(after)
    assert kb.core_chain[2:4] == ("RecordMatcher", "PolicyRetrieval")
    assert ka.core_chain[2:4] == ("PolicyRetrieval", "RecordMatcher")
    assert ("DataValidator", "RecordMatcher") in kb.edge_set and ("DataValidator", "PolicyRetrieval") in ka.edge_set
    assert kb != ka


def test_exact_exemplar_prior_is_both_maxima(registry, invoice_task, bank):
    plan = chain_plan(list(STANDARD), registry)
    cfg = EngineConfig()
    assert extra_nodes(plan, invoice_task) == 0
    assert prior_score(plan, invoice_task, bank, cfg) == pytest.approx(cfg.w_sim * 1.0 + cfg.w_brev)


def test_brevity_terms_for_one_and_three_extras(registry, invoice_task):
    # w_sim = 0 isolates the brevity term: 1 - extra / max_extra
    cfg = EngineConfig(w_sim=0.0, w_brev=1.0)
    bank = ExemplarBank(())
    one = chain_plan(list(STANDARD[:-1]) + ["RecordMatcher", "Approval"], registry)
    three = chain_plan(list(STANDARD[:-1]) + ["RecordMatcher", "APIAccess", "ExtraVerification", "Approval"], registry)
    assert prior_score(one, invoice_task, bank, cfg) == pytest.approx(0.75)
    assert prior_score(three, invoice_task, bank, cfg) == pytest.approx(0.25)


def test_max_extra_zeroes_brevity(registry, invoice_task):
    cfg = EngineConfig(w_sim=0.0, w_brev=1.0, max_extra=2)
    plan = chain_plan(list(STANDARD[:-1]) + ["RecordMatcher", "APIAccess", "Approval"], registry)
    assert prior_score(plan, invoice_task, ExemplarBank(()), cfg) == 0.0


def test_invoice_task_gets_five_distinct_feasible_plans(registry, invoice_task, bank):
    plans = generate_candidates(invoice_task, bank, registry, K=5)
    assert len(plans) == 5
    assert len({equivalence_key(p) for p in plans}) == 5
    assert all(type_check(p, registry, invoice_task).feasible for p in plans)
    assert [p.prior_score for p in plans] == sorted((p.prior_score for p in plans), reverse=True)


def test_month_end_event_plans_schedule_first(registry, bank):
    task = normalize(RawInput("event", "month_end_day30", "2024-06-30T00:00:00Z", "scheduler"))
    plans = generate_candidates(task, bank, registry, K=5)
    assert plans
    for p in plans:
        chain = core_chain(p)
        assert chain.index("Scheduler") < chain.index("ReportGenerator")


def test_vendor_task_policy_upstream_of_effects(registry, invoice_task, bank):
    for p in generate_candidates(invoice_task, bank, registry, K=5):
        anc = p.ancestors()
        policy = p.node_for("PolicyRetrieval")
        assert policy is not None
        for n in p.nodes:
            if registry.lookup(n.agent).side_effecting:
                assert policy.id in anc[n.id]


def test_negative_exemplar_chain_never_proposed(registry, invoice_task, bank):
    banned = {e.chain for e in bank.negatives(invoice_task)}
    assert banned
    assert all(core_chain(p) not in banned for p in generate_candidates(invoice_task, bank, registry, K=5))


def test_no_matching_exemplar_raises(registry, invoice_task):
    bank = ExemplarBank((Exemplar("events", Signature(("event_triggered",)), ("Scheduler", "ReportGenerator")),))
    with pytest.raises(NoFeasiblePlanError):
        generate_candidates(invoice_task, bank, registry)


def test_plan_json_round_trip(registry, invoice_task, bank):
    for p in generate_candidates(invoice_task, bank, registry):
        assert Plan.from_json(p.to_json()) == p


def test_required_agents_by_task_kind(invoice_task, month_end_task):
    assert "Approval" in required_agents(invoice_task)
    assert {"Scheduler", "ReportGenerator"} <= required_agents(month_end_task)


@settings(max_examples=40, deadline=None)
@given(
    day=st.integers(1, 30),
    batch=st.booleans(),
    channel=st.sampled_from(["upload", "email", "api"]),
    k=st.integers(1, 7),
)
def test_candidates_always_feasible_and_distinct(registry, bank, day, batch, channel, k):
    raw = replace(invoice_raw(f"2024-06-{day:02d}", {"batch": "month_end"} if batch else {}), channel=channel)
    task = normalize(raw)
    plans = generate_candidates(task, bank, registry, K=k)
    assert 1 <= len(plans) <= k
    assert len({equivalence_key(p) for p in plans}) == len(plans)
    for p in plans:
        assert type_check(p, registry, task).feasible
        if task.is_month_end:
            chain = core_chain(p)
            assert chain.index("Scheduler") < chain.index("ReportGenerator")
