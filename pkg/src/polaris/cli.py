"""Command-line entry point: gen-suite, run, eval, replay."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, load_config
from .harness.expectations import check_expectations
from .harness.outputs import emit_outputs, load_predictions, write_tables
from .harness.pipeline import run_scenario
from .harness.replay import load_trace, replay_file
from .harness.scoring import TABLES, format_table, score_run, table_rows
from .harness.suite import SCENARIOS, GroundTruth, Suite, SuiteConfig, generate_suite
from .planner import ExemplarBank

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUN = 2
EXIT_MISMATCH = 3


def _noise(items: Sequence[str]) -> dict[str, float]:
    out = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"noise entries look like class=probability, got {item!r}")
        try:
            out[name] = float(value)
        except ValueError as exc:
            raise ConfigError(f"bad probability in {item!r}") from exc
    return out


def cmd_gen_suite(args: argparse.Namespace) -> int:
    cfg = SuiteConfig(
        args.scenario,
        invoices_per_scenario=args.invoices,
        seed=args.seed,
        noise_level=_noise(args.noise),
        anomaly_injections=args.injections,
    )
    suite = generate_suite(cfg)
    out = suite.save(args.out)
    print(f"wrote {len(suite.items)} {args.scenario} invoices to {out}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    bank = ExemplarBank.load(args.exemplars)
    suite_dir = Path(args.suite)
    if not (suite_dir / "config.json").exists():
        raise ConfigError(f"{suite_dir} is not a suite directory")
    suite = Suite.load(suite_dir)
    result = run_scenario(suite, cfg, bank, jobs=args.jobs)
    out = Path(args.out) if args.out else suite_dir / "run"
    emit_outputs(result, out, truth=suite.truth, trace_dir=args.trace, feedback_path=args.feedback)
    counts = {d: sum(1 for x in result.decisions if x.decision == d) for d in ("approve", "hold", "reject")}
    print(f"{suite.config.scenario}: {counts} -> {out}")
    return EXIT_OK


def _load_truth(path: Path) -> tuple[str, GroundTruth]:
    scenario = json.loads((path / "config.json").read_text())["scenario"]
    return scenario, GroundTruth.from_json(json.loads((path / "truth.json").read_text()))


def cmd_eval(args: argparse.Namespace) -> int:
    truths = dict(_load_truth(Path(t)) for t in args.truth)
    scores, failures = [], []
    for run_dir in map(Path, args.run):
        meta = json.loads((run_dir / "run.json").read_text())
        scenario = meta["scenario"]
        if scenario not in truths:
            raise ConfigError(f"no truth directory for scenario {scenario}")
        preds = load_predictions(run_dir)
        s = score_run(scenario, preds, truths[scenario])
        scores.append(s)
        trace_dir = run_dir / meta["trace_dir"]
        traces = [load_trace(p) for p in sorted(trace_dir.glob("*.json"))]
        failures += [f"{scenario}: {f}" for f in check_expectations(s, preds, traces)]
    if args.format == "json":
        print(json.dumps({"tables": {n: table_rows(n, scores) for n in TABLES}, "failures": failures}, indent=2, ensure_ascii=False))
    else:
        print(write_tables(args.out, scores) if args.out else "\n".join(format_table(n, scores) for n in TABLES))
        for f in failures:
            print(f"MISMATCH {f}")
    return EXIT_MISMATCH if failures else EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    path = Path(args.trace)
    files = sorted(path.glob("*.json")) if path.is_dir() else [path]
    if not files:
        raise ConfigError(f"no traces under {path}")
    bad = 0
    for f in files:
        ok, diffs, run = replay_file(f)
        print(f"{f.name}: {'identical' if ok else 'DIFFERS ' + ','.join(diffs)} decision={run.decision.decision}")
        bad += not ok
    return EXIT_MISMATCH if bad else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polaris", description="Governed invoice workflow engine")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-suite", help="generate a seeded synthetic scenario")
    g.add_argument("--scenario", choices=SCENARIOS, required=True)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--out", required=True)
    g.add_argument("--invoices", type=int, default=10)
    g.add_argument("--injections", type=int, default=None, help="amount outliers to inject")
    g.add_argument("--noise", nargs="*", default=[], metavar="CLASS=P", help="VL corruption probabilities")
    g.set_defaults(func=cmd_gen_suite)

    r = sub.add_parser("run", help="run every document of a suite")
    r.add_argument("--suite", required=True)
    r.add_argument("--config", default=None, help="JSON or YAML engine config")
    r.add_argument("--trace", default=None, help="trace directory (default: OUT/traces)")
    r.add_argument("--out", default=None, help="run directory (default: SUITE/run)")
    r.add_argument("--exemplars", default=None, help="exemplar bank YAML")
    r.add_argument("--feedback", default=None, help="exemplar feedback JSONL to append to")
    r.add_argument("--jobs", type=int, default=1, help="documents processed concurrently")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="score runs against suite ground truth")
    e.add_argument("--run", nargs="+", required=True)
    e.add_argument("--truth", nargs="+", required=True, help="suite directories")
    e.add_argument("--format", choices=("table", "json"), default="table")
    e.add_argument("--out", default=None, help="also write tables.txt and metrics.json here")
    e.set_defaults(func=cmd_eval)

    rp = sub.add_parser("replay", help="re-execute traces single-threaded and compare")
    rp.add_argument("--trace", required=True, help="trace file or directory")
    rp.set_defaults(func=cmd_replay)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, KeyError, ValueError) as exc:
        print(f"run failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
