from __future__ import annotations

import json
from datetime import date
from decimal import Decimal

import pytest

from polaris.cli import main
from polaris.config import ConfigError
from polaris.governance import ConfusionCounts
from polaris.harness.expectations import check_expectations
from polaris.harness.oracles import oracle_z
from polaris.harness.outputs import emit_outputs, load_predictions, prediction
from polaris.harness.pipeline import DocumentInputs, replay_matches, run_batch, run_scenario, suite_inputs
from polaris.harness.replay import audit_trace, load_trace, replay_file, scheduler_precedes_report
from polaris.harness.scoring import extraction_counts, format_table, label_counts, score_run
from polaris.harness.suite import K_MAD, Suite, SuiteConfig, generate_suite


@pytest.fixture(scope="module")
def suites():
    return {s: generate_suite(SuiteConfig(s, seed=42)) for s in ("CC", "CM", "VU", "VL")}


@pytest.fixture(scope="module")
def results(suites, registry):
    return {s: run_scenario(suite, registry=registry) for s, suite in suites.items()}


@pytest.mark.parametrize(
    "kwargs",
    [
        {"scenario": "XX"},
        {"scenario": "CC", "noise_level": {"label_swap": 0.2}},
        {"scenario": "VL", "noise_level": {"smudge": 0.2}},
        {"scenario": "VL", "noise_level": {"label_swap": 1.5}},
        {"scenario": "VL", "anomaly_injections": 11},
        {"scenario": "VU", "anomaly_injections": 1},
        {"scenario": "CM", "z_range": (2.0, 8.0)},
        {"scenario": "CC", "invoices_per_scenario": 0},
    ],
)
def test_bad_suite_configs_rejected(kwargs):
    with pytest.raises(ConfigError):
        SuiteConfig(**kwargs)


def test_clean_suite_has_no_labels(suites):
    cc = suites["CC"]
    assert len(cc.items) == 10
    assert cc.truth.violation_labels() == set() and cc.truth.anomaly_labels() == set()


def test_unknown_vendor_suite_labels_every_invoice(suites):
    vu = suites["VU"]
    assert vu.truth.violation_labels() == {(i.invoice_id, "unknown_vendor") for i in vu.items}
    assert all(i.facts.vendor not in vu.store for i in vu.items)


def test_injected_outliers_labelled_by_oracle(suites):
    vl = suites["VL"]
    injected = [t for t in vl.truth.records if t.injected]
    assert len(injected) == 2
    for t in injected:
        assert ("amount" in t.anomalies) and t.amount_z > K_MAD
    amount_labels = {i for i, k in vl.truth.anomaly_labels() if k == "amount"}
    assert amount_labels == {t.invoice_id for t in injected}


def test_labels_recomputed_from_saved_state(suites):
    # independent recheck: re-derive every amount z from the pre-batch baseline with the oracle
    cm = suites["CM"]
    for item, t in zip(cm.items, cm.truth.records):
        key = item.facts.vendor.casefold()
        hist = cm.baseline.vendor_histories.get(key)
        if t.amount_source == "vendor":
            assert oracle_z(item.facts.total, hist) == pytest.approx(t.amount_z, rel=1e-6)


def test_generation_is_seeded(suites):
    again = generate_suite(SuiteConfig("VL", seed=42))
    assert [i.doc.to_text() for i in again.items] == [i.doc.to_text() for i in suites["VL"].items]
    other = generate_suite(SuiteConfig("VL", seed=43))
    assert [i.doc.to_text() for i in other.items] != [i.doc.to_text() for i in suites["VL"].items]


def test_suite_save_load_round_trip(suites, tmp_path):
    vl = suites["VL"]
    loaded = Suite.load(vl.save(tmp_path / "vl"))
    assert loaded.config == vl.config
    assert loaded.truth == vl.truth
    assert [i.doc.to_text() for i in loaded.items] == [i.doc.to_text() for i in vl.items]
    assert loaded.store.to_json() == vl.store.to_json()
    assert loaded.baseline.to_json() == vl.baseline.to_json()


def test_document_inputs_round_trip(suites):
    inputs = suite_inputs(suites["CM"])[0]
    assert DocumentInputs.from_json(json.loads(json.dumps(inputs.to_json()))).to_json() == inputs.to_json()


def test_clean_run_approves_all(results):
    assert [d.decision for d in results["CC"].decisions] == ["approve"] * 10


def test_unknown_vendor_run_blocks_all(results):
    for d in results["VU"].decisions:
        assert d.decision != "approve"
        assert "policy:unknown_vendor:blocking" in d.rationale


def test_month_end_traces_schedule_before_report(results):
    assert all(scheduler_precedes_report(t) for t in results["CM"].traces)


def test_all_traces_pass_audit(results):
    for r in results.values():
        for t in r.traces:
            assert audit_trace(t) == []


def test_audit_catches_tampering(results):
    trace = json.loads(json.dumps(results["VU"].traces[0]))
    trace["execution"]["gate_checks"] = [{"node": "Approval", "blocking": ["unknown_vendor"]}]
    trace["events"].append({"node": "Approval", "agent": "Approval", "phase": "dispatched", "inputs": None})
    problems = audit_trace(trace)
    assert any("blocking" in p for p in problems)
    assert any("input snapshot" in p for p in problems)
    assert any("completion" in p for p in problems)


def test_replay_reproduces_and_detects_drift(results):
    trace = results["VL"].traces[0]
    assert replay_matches(trace) == (True, [])
    forged = json.loads(json.dumps(trace))
    forged["decision"]["decision"] = "reject"
    assert replay_matches(forged) == (False, ["decision"])


def test_concurrent_batch_matches_serial(suites, registry):
    inputs = suite_inputs(suites["VL"])
    a = run_batch(inputs, "VL", registry, jobs=4)
    b = run_batch(inputs, "VL", registry, serial=True)
    assert [d.to_json() for d in a.decisions] == [d.to_json() for d in b.decisions]
    assert a.baseline.to_json() == b.baseline.to_json()


def test_baseline_commits_after_batch(suites, results):
    cc = suites["CC"]
    before = cc.baseline.size()
    assert results["CC"].baseline.size() == before + 10
    # the suite's own snapshot is untouched
    assert cc.baseline.size() == before


def test_extraction_counting_convention():
    truth = {"invoice_number": "INV-1", "issue_date": "2024-05-01", "vendor": "Acme Corp", "total": None}
    got = {"invoice_number": "INV-1", "issue_date": date(2024, 5, 2), "vendor": None, "total": None}
    assert extraction_counts(got, truth) == ConfusionCounts(1, 1, 1, 1)
    assert extraction_counts({"total": Decimal("5.00"), "vendor": " acme  corp"}, {"total": "5", "vendor": "Acme Corp"}).tp == 2


def test_label_counts_tn_counts_untouched_invoices():
    c = label_counts({("a", "x"), ("b", "x")}, {("a", "x"), ("c", "y")}, ["a", "b", "c", "d", "e"])
    assert c == ConfusionCounts(1, 1, 1, 2)


def test_tables_show_dashes_without_positives(results, suites):
    scores = [score_run(s, [prediction(r) for r in results[s].runs], suites[s].truth) for s in ("CC", "VU")]
    text = format_table("anomaly", scores)
    rows = {line.split()[0]: line for line in text.splitlines()[3:]}
    assert rows["CC"].split()[-3:] == ["—", "—", "—"]
    assert rows["VU"].split()[-3:] == ["—", "—", "—"]
    policy = format_table("policy", scores)
    assert "TPV" in policy and policy.splitlines()[3].split()[:5] == ["VU", "10", "0", "0", "0"]


def test_expectations_hold_for_every_scenario(results, suites):
    for s, r in results.items():
        preds = [prediction(x) for x in r.runs]
        assert check_expectations(score_run(s, preds, suites[s].truth), preds, r.traces) == []


def test_emit_outputs_layout(results, suites, tmp_path):
    out = emit_outputs(results["CM"], tmp_path / "run", truth=suites["CM"].truth)
    for name in ("run.json", "predictions.jsonl", "events.jsonl", "tables.txt", "metrics.json", "exemplar_feedback.jsonl"):
        assert (out / name).exists()
    assert len(list((out / "traces").glob("*.json"))) == 10
    meta = json.loads((out / "run.json").read_text())
    assert meta["trace_dir"] == "traces" and sum(meta["decisions"].values()) == 10
    preds = load_predictions(out)
    assert isinstance(preds[0]["fields"]["issue_date"], date)
    ok, diffs, _ = replay_file(out / "traces" / "CM-001.json")
    assert ok, diffs


def test_cli_end_to_end(tmp_path, capsys):
    suite_dir, run_dir = tmp_path / "vl", tmp_path / "vl_run"
    assert main(["gen-suite", "--scenario", "VL", "--seed", "5", "--out", str(suite_dir)]) == 0
    assert main(["run", "--suite", str(suite_dir), "--out", str(run_dir), "--jobs", "2"]) == 0
    assert main(["eval", "--run", str(run_dir), "--truth", str(suite_dir), "--format", "json"]) in (0, 3)
    payload = json.loads(capsys.readouterr().out.split("\n", 2)[-1])
    assert set(payload) == {"tables", "failures"}
    assert main(["replay", "--trace", str(run_dir / "traces")]) == 0
    trace = load_trace(run_dir / "traces" / "VL-001.json")
    trace["decision"]["decision"] = "reject"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(trace))
    assert main(["replay", "--trace", str(bad)]) == 3


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["gen-suite", "--scenario", "CC", "--noise", "label_swap=0.3", "--out", str(tmp_path / "x")]) == 1
    assert main(["gen-suite", "--scenario", "VL", "--noise", "label_swap", "--out", str(tmp_path / "x")]) == 1
    assert main(["run", "--suite", str(tmp_path)]) == 1
    assert main(["eval", "--run", str(tmp_path / "missing"), "--truth", str(tmp_path / "missing")]) == 2
    with pytest.raises(SystemExit):
        main(["gen-suite", "--scenario", "ZZ", "--out", "x"])
