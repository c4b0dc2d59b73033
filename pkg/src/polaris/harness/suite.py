"""Seeded synthetic invoice suites (CC, CM, VU, VL) with oracle ground truth."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from decimal import Decimal
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

from ..config import ConfigError
from ..extraction.documents import (
    InvoiceFacts,
    NoiseEvent,
    SyntheticDocument,
    corrupt_char_substitution,
    corrupt_decimal_swap,
    corrupt_future_date,
    corrupt_label_swap,
    corrupt_line_shift,
    render,
    with_lines,
)
from ..governance import AnomalyBaseline, PolicyRecord, PolicyStore, vendor_key
from ..task_model import RawInput
from .oracles import ORACLE_SCALE, oracle_history, oracle_violations, oracle_z, sorted_median

SCENARIOS = ("CC", "CM", "VU", "VL")
DEFAULT_RUN_DATE = {"CC": date(2024, 6, 14), "CM": date(2024, 6, 30), "VU": date(2024, 6, 14), "VL": date(2024, 6, 14)}
DEFAULT_INJECTIONS = {"CC": 0, "CM": 2, "VU": 0, "VL": 2}
DEFAULT_NOISE = {
    "char_substitution": 0.12,
    "label_swap": 0.15,
    "line_shift": 0.10,
    "decimal_swap": 0.25,
    "future_date": 0.10,
}
NOISY_FIELDS = ("invoice_number", "vendor", "issue_date", "due_date", "currency", "total")
MAX_EVENTS_PER_FIELD = 2
# normal amounts keep this much headroom below k_mad so labels are unambiguous
NORMAL_Z_CEILING = 3.0
K_MAD = 3.5

# (vendor, sector, currency, mean amount, history length); history length 0
# marks a vendor whose history is one repeated amount (MAD = 0)
VENDOR_TABLE = (
    ("Acme Corp", "office", "USD", 1200, 12),
    ("Umbrella Supplies", "office", "USD", 950, 3),
    ("Globex Ltd", "logistics", "USD", 2400, 12),
    ("Initech", "software", "USD", 1800, 12),
    ("Stark Industrial", "manufacturing", "EUR", 3100, 12),
    ("Cyberdyne Parts", "manufacturing", "EUR", 2900, 0),
    ("Wayne Logistics", "logistics", "EUR", 2100, 12),
    ("Tyrell Systems", "software", "EUR", 1600, 12),
)
UNKNOWN_VENDORS = (
    "Nimbus Trading",
    "Orion Freight",
    "Vertex Office Supply",
    "Halcyon Metals",
    "Quarry Lane Services",
    "Bluefin Analytics",
    "Copperleaf Foods",
    "Juniper Print Works",
    "Saffron Catering",
    "Northwind Tools",
    "Kestrel Aviation",
    "Marlow Textiles",
)
ITEM_DESCRIPTIONS = ("Consulting", "Hardware", "Freight", "Licences", "Maintenance", "Supplies", "Support", "Training")


def default_store(seed: int = 7) -> tuple[PolicyStore, AnomalyBaseline]:
    """Fixed vendor policy table and amount baselines shared by every scenario."""
    rng = random.Random(f"baseline:{seed}")
    records = []
    samples: list[tuple[str, Decimal]] = []
    cohorts: dict[str, tuple[str, str]] = {}
    for vendor, sector, currency, mean, n in VENDOR_TABLE:
        records.append(PolicyRecord(vendor, Decimal(mean * 5), currency, "net30", sector))
        cohorts[vendor] = (sector, currency)
        if n == 0:
            samples += [(vendor, Decimal(f"{mean}.00"))] * 6
        else:
            for _ in range(n):
                amt = Decimal(str(round(mean * rng.uniform(0.85, 1.15), 2))).quantize(Decimal("0.01"))
                samples.append((vendor, amt))
    store = PolicyStore(records)
    baseline = AnomalyBaseline.build(samples, cohorts, n_min=5)
    return store, baseline


@dataclass(frozen=True)
class SuiteConfig:
    scenario: str
    invoices_per_scenario: int = 10
    seed: int = 42
    noise_level: Mapping[str, float] = field(default_factory=dict)
    anomaly_injections: Optional[int] = None
    z_range: tuple[float, float] = (6.0, 12.0)
    run_date: Optional[date] = None

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.invoices_per_scenario < 1:
            raise ConfigError("a suite needs at least one invoice")
        if any(p > 0 for p in self.noise_level.values()) and self.scenario != "VL":
            raise ConfigError(f"{self.scenario} is a zero-noise scenario")
        unknown = set(self.noise_level) - set(DEFAULT_NOISE)
        if unknown:
            raise ConfigError(f"unknown corruption classes {sorted(unknown)}")
        if any(not 0 <= p <= 1 for p in self.noise_level.values()):
            raise ConfigError("corruption probabilities must lie in [0, 1]")
        inj = self.injections
        if inj < 0 or inj > self.invoices_per_scenario:
            raise ConfigError("injection count out of range")
        if inj and self.scenario in ("CC", "VU"):
            raise ConfigError(f"{self.scenario} expects no anomalies")
        lo, hi = self.z_range
        if not K_MAD < lo <= hi:
            raise ConfigError(f"injection z-range must sit above k_mad={K_MAD}")

    @property
    def injections(self) -> int:
        return DEFAULT_INJECTIONS[self.scenario] if self.anomaly_injections is None else self.anomaly_injections

    @property
    def date(self) -> date:
        return self.run_date or DEFAULT_RUN_DATE[self.scenario]

    @property
    def noise(self) -> dict[str, float]:
        if self.scenario != "VL":
            return {}
        return {**DEFAULT_NOISE, **self.noise_level}

    def to_json(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "invoices_per_scenario": self.invoices_per_scenario,
            "seed": self.seed,
            "noise_level": dict(sorted(self.noise_level.items())),
            "anomaly_injections": self.anomaly_injections,
            "z_range": list(self.z_range),
            "run_date": self.run_date.isoformat() if self.run_date else None,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "SuiteConfig":
        return cls(
            data["scenario"],
            int(data.get("invoices_per_scenario", 10)),
            int(data.get("seed", 42)),
            dict(data.get("noise_level", {})),
            data.get("anomaly_injections"),
            tuple(data.get("z_range", (6.0, 12.0))),
            date.fromisoformat(data["run_date"]) if data.get("run_date") else None,
        )


@dataclass(frozen=True)
class SuiteItem:
    invoice_id: str
    raw: RawInput
    doc: SyntheticDocument
    facts: InvoiceFacts
    approvals: frozenset[str] = frozenset()

    def to_json(self) -> dict[str, Any]:
        return {
            "invoice_id": self.invoice_id,
            "raw": self.raw.to_json(),
            "noise": [e.to_json() for e in self.doc.noise_meta],
            "facts": self.facts.to_json(),
            "approvals": sorted(self.approvals),
        }


@dataclass(frozen=True)
class TruthRecord:
    invoice_id: str
    fields: Mapping[str, str]
    violations: tuple[str, ...]
    anomalies: tuple[str, ...]
    amount_z: Optional[float]
    amount_source: str
    injected: bool = False

    def to_json(self) -> dict[str, Any]:
        return {
            "invoice_id": self.invoice_id,
            "fields": dict(self.fields),
            "violations": list(self.violations),
            "anomalies": list(self.anomalies),
            "amount_z": self.amount_z,
            "amount_source": self.amount_source,
            "injected": self.injected,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "TruthRecord":
        return cls(
            data["invoice_id"],
            dict(data["fields"]),
            tuple(data["violations"]),
            tuple(data["anomalies"]),
            data["amount_z"],
            data["amount_source"],
            bool(data.get("injected", False)),
        )


@dataclass(frozen=True)
class GroundTruth:
    records: tuple[TruthRecord, ...]

    def by_id(self) -> dict[str, TruthRecord]:
        return {r.invoice_id: r for r in self.records}

    def violation_labels(self) -> set[tuple[str, str]]:
        return {(r.invoice_id, k) for r in self.records for k in r.violations}

    def anomaly_labels(self) -> set[tuple[str, str]]:
        return {(r.invoice_id, k) for r in self.records for k in r.anomalies}

    def to_json(self) -> dict[str, Any]:
        return {"records": [r.to_json() for r in self.records]}

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "GroundTruth":
        return cls(tuple(TruthRecord.from_json(r) for r in data["records"]))


@dataclass
class Suite:
    config: SuiteConfig
    items: list[SuiteItem]
    truth: GroundTruth
    store: PolicyStore
    baseline: AnomalyBaseline
    # purchase-order references: invoice number -> (vendor, amount)
    ledger: dict[str, tuple[str, Decimal]] = field(default_factory=dict)

    @property
    def docs(self) -> list[SyntheticDocument]:
        return [it.doc for it in self.items]

    @property
    def run_date(self) -> date:
        return self.config.date

    def save(self, out: str | Path) -> Path:
        out = Path(out)
        (out / "documents").mkdir(parents=True, exist_ok=True)
        _dump(out / "config.json", self.config.to_json())
        _dump(out / "store.json", self.store.to_json())
        _dump(out / "baseline.json", self.baseline.to_json())
        _dump(out / "truth.json", self.truth.to_json())
        _dump(out / "ledger.json", {k: [v, str(a)] for k, (v, a) in sorted(self.ledger.items())})
        for it in self.items:
            (out / "documents" / f"{it.invoice_id}.txt").write_text(it.doc.to_text())
            _dump(out / "documents" / f"{it.invoice_id}.json", it.to_json())
        return out

    @classmethod
    def load(cls, path: str | Path) -> "Suite":
        path = Path(path)
        cfg = SuiteConfig.from_json(_load(path / "config.json"))
        items = []
        for meta_file in sorted((path / "documents").glob("*.json")):
            meta = _load(meta_file)
            text = (path / "documents" / f"{meta['invoice_id']}.txt").read_text()
            noise = tuple(NoiseEvent.from_json(e) for e in meta["noise"])
            doc = SyntheticDocument.from_text(text, noise)
            f = meta["facts"]
            facts = InvoiceFacts(
                f["invoice_number"],
                f["vendor"],
                date.fromisoformat(f["issue_date"]),
                date.fromisoformat(f["due_date"]),
                f["currency"],
                tuple((d, Decimal(a)) for d, a in f["line_items"]),
            )
            items.append(SuiteItem(meta["invoice_id"], RawInput.from_json(meta["raw"]), doc, facts, frozenset(meta["approvals"])))
        return cls(
            cfg,
            items,
            GroundTruth.from_json(_load(path / "truth.json")),
            PolicyStore.from_json(_load(path / "store.json")),
            AnomalyBaseline.from_json(_load(path / "baseline.json")),
            {k: (v, Decimal(a)) for k, (v, a) in _load(path / "ledger.json").items()},
        )


def _dump(path: Path, data: Any) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _load(path: Path) -> Any:
    return json.loads(path.read_text())


def _split_amount(total: Decimal, rng: random.Random) -> tuple[tuple[str, Decimal], ...]:
    cents = int(total * 100)
    k = min(rng.randint(2, 4), max(1, cents))
    cuts = sorted(rng.sample(range(1, cents), k - 1)) if k > 1 else []
    parts = [b - a for a, b in zip([0, *cuts], [*cuts, cents])]
    descs = rng.sample(ITEM_DESCRIPTIONS, k)
    return tuple((d, (Decimal(p) / 100).quantize(Decimal("0.01"))) for d, p in zip(descs, parts))


def _cents(x: float | Fraction) -> Decimal:
    return Decimal(str(round(float(x), 2))).quantize(Decimal("0.01"))


def _history_for(vendor: str, baseline: AnomalyBaseline) -> tuple[str, list[Decimal]]:
    return oracle_history(
        vendor,
        baseline.vendor_histories,
        baseline.cohort_histories,
        baseline.global_history,
        baseline.vendor_cohort,
        baseline.n_min,
    )


def _normal_amount(rng: random.Random, hist: Sequence[Decimal], global_hist: Sequence[Decimal], cap: Optional[Decimal]) -> Decimal:
    med = sorted_median([Fraction(str(h)) for h in hist])
    for _ in range(500):
        x = _cents(med * Fraction(str(round(rng.uniform(0.92, 1.08), 4))))
        if cap is not None and x > cap:
            continue
        z, zg = oracle_z(x, hist), oracle_z(x, global_hist)
        if (z is None or z <= NORMAL_Z_CEILING) and (zg is None or zg <= NORMAL_Z_CEILING):
            return x
    raise ConfigError("could not draw a non-anomalous amount")


def _outlier_amount(rng: random.Random, hist: Sequence[Decimal], z_range: tuple[float, float]) -> Decimal:
    hs = [Fraction(str(h)) for h in hist]
    med = sorted_median(hs)
    mad = sorted_median([abs(h - med) for h in hs])
    target = Fraction(str(round(rng.uniform(*z_range), 3)))
    return _cents(med + target * ORACLE_SCALE * mad)


def _apply_noise(
    doc: SyntheticDocument, facts: InvoiceFacts, noise: Mapping[str, float], today: date, rng: random.Random, protect_vendor: bool
) -> tuple[SyntheticDocument, InvoiceFacts]:
    lines = list(doc.lines)
    events: list[NoiseEvent] = []
    # calendar shift first, so later corruptions act on the printed dates
    if rng.random() < noise.get("future_date", 0.0):
        ev = corrupt_future_date(lines, today, rng)
        if ev is not None:
            events.append(ev)
            issue = today + timedelta(days=int(ev.detail[1:-1]))
            facts = replace(facts, issue_date=issue, due_date=issue + timedelta(days=30))
    shifted = False
    for name in NOISY_FIELDS:
        count = 0
        for cls_name, fn in (
            ("char_substitution", corrupt_char_substitution),
            ("label_swap", corrupt_label_swap),
            ("line_shift", corrupt_line_shift),
            ("decimal_swap", corrupt_decimal_swap),
        ):
            if count >= MAX_EVENTS_PER_FIELD:
                break
            if cls_name == "decimal_swap" and name != "total":
                continue
            if cls_name == "line_shift" and shifted:
                continue
            if cls_name == "char_substitution" and name == "vendor" and protect_vendor:
                continue
            if rng.random() >= noise.get(cls_name, 0.0):
                continue
            ev = fn(lines, name, rng)
            if ev is None:
                continue
            events.append(ev)
            count += 1
            shifted = shifted or cls_name == "line_shift"
    return with_lines(doc, lines, events), facts


def generate_suite(cfg: SuiteConfig, store: Optional[PolicyStore] = None, baseline: Optional[AnomalyBaseline] = None) -> Suite:
    if store is None or baseline is None:
        d_store, d_base = default_store()
        store = store or d_store
        baseline = baseline or d_base
    rng = random.Random(f"{cfg.scenario}:{cfg.seed}")
    today = cfg.date
    n = cfg.invoices_per_scenario
    known = store.vendors()
    if not known and cfg.scenario != "VU":
        raise ConfigError("policy store has no vendors")
    if cfg.scenario == "VU":
        pool = [v for v in UNKNOWN_VENDORS if v not in store]
        if len(pool) < 1:
            raise ConfigError("no absent vendors available")
    injected = set(rng.sample(range(n), cfg.injections))
    base_no = rng.randint(100000, 899999 - n)
    items: list[SuiteItem] = []
    truth: list[TruthRecord] = []
    ledger: dict[str, tuple[str, Decimal]] = {}
    for i in range(n):
        if cfg.scenario == "VU":
            vendor = pool[i % len(pool)]
            currency = rng.choice(("USD", "EUR"))
            record = None
        else:
            vendor = rng.choice(known)
            record = store.get(vendor)
            assert record is not None
            currency = record.currency
        if vendor in store and cfg.scenario == "VU":
            raise ConfigError("VU vendors must be absent from the policy store")
        source, hist = _history_for(vendor, baseline)
        if i in injected:
            total = _outlier_amount(rng, hist, cfg.z_range)
        else:
            total = _normal_amount(rng, hist, baseline.global_history, record.threshold if record else None)
        issue = today - timedelta(days=rng.randint(35, 60))
        facts = InvoiceFacts(
            invoice_number=f"INV-{base_no + i:06d}",
            vendor=vendor,
            issue_date=issue,
            due_date=issue + timedelta(days=30),
            currency=currency,
            line_items=_split_amount(total, rng),
        )
        doc = render(facts)
        if record is not None:
            ledger[facts.invoice_number] = (vendor, facts.total)
        if cfg.noise:
            doc, facts = _apply_noise(doc, facts, cfg.noise, today, rng, protect_vendor=i in injected)

        z = oracle_z(facts.total, hist)
        anomalies = []
        if z is not None and z > K_MAD:
            anomalies.append("amount")
        if any(d > today for d in (facts.issue_date, facts.due_date)):
            anomalies.append("date")
        violations = oracle_violations(
            vendor_known=record is not None,
            blacklisted=vendor_key(vendor) in store.blacklist,
            total=facts.total,
            threshold=record.threshold if record else None,
            currency=facts.currency,
            policy_currency=record.currency if record else None,
            has_approval=False,
            duplicate_days=None,
            lookback_days=90,
        )
        invoice_id = f"{cfg.scenario}-{i + 1:03d}"
        meta = {"scenario": cfg.scenario, "invoice_id": invoice_id}
        if cfg.scenario == "CM":
            meta["batch"] = "month_end"
        raw = RawInput(
            kind="file",
            payload=doc.to_text(),
            received_at=f"{today.isoformat()}T09:{i % 60:02d}:00+00:00",
            channel="email" if i % 2 else "upload",
            filename=f"{facts.invoice_number}.pdf",
            meta=meta,
        )
        items.append(SuiteItem(invoice_id, raw, doc, facts))
        truth.append(
            TruthRecord(
                invoice_id,
                {k: v for k, v in facts.to_json().items() if k != "line_items"},
                tuple(sorted(violations)),
                tuple(anomalies),
                None if z is None else round(z, 9),
                source,
                i in injected,
            )
        )
    return Suite(cfg, items, GroundTruth(tuple(truth)), store, baseline, ledger)
