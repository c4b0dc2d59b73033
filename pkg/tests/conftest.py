from __future__ import annotations

from datetime import date
from decimal import Decimal

import pytest

from polaris.agents import default_registry
from polaris.config import EngineConfig
from polaris.extraction.documents import InvoiceFacts, render
from polaris.planner import ExemplarBank
from polaris.task_model import RawInput, normalize


def invoice_raw(day: str = "2024-06-14", meta: dict | None = None, name: str = "inv_001.pdf") -> RawInput:
    return RawInput("file", "INVOICE\n", f"{day}T09:00:00+00:00", "upload", name, meta=meta or {})


def sample_facts(vendor: str = "Acme Corp", total: str = "1200.00", currency: str = "USD") -> InvoiceFacts:
    amount = Decimal(total)
    first = (amount / 2).quantize(Decimal("0.01"))
    return InvoiceFacts(
        "INV-100200",
        vendor,
        date(2024, 5, 1),
        date(2024, 5, 31),
        currency,
        (("Consulting", first), ("Support", amount - first)),
    )


@pytest.fixture(scope="session")
def registry():
    return default_registry()


@pytest.fixture(scope="session")
def bank():
    return ExemplarBank.load()


@pytest.fixture
def cfg():
    return EngineConfig()


@pytest.fixture(scope="session")
def invoice_task():
    return normalize(invoice_raw())


@pytest.fixture(scope="session")
def month_end_task():
    return normalize(invoice_raw(meta={"batch": "month_end"}, day="2024-06-30"))


@pytest.fixture
def clean_doc():
    return render(sample_facts())
