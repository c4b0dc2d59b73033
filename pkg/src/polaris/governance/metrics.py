"""Confusion counts with the undefined-cell convention for empty positive classes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Hashable, Iterable, Optional

UNDEFINED = "—"


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @property
    def defined(self) -> bool:
        # no positives in truth: the row reports dashes
        return self.tp + self.fn > 0

    @property
    def precision(self) -> Optional[float]:
        if not self.defined:
            return None
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> Optional[float]:
        if not self.defined:
            return None
        return self.tp / (self.tp + self.fn)

    @property
    def f1(self) -> Optional[float]:
        p, r = self.precision, self.recall
        if p is None or r is None:
            return None
        return 2 * p * r / (p + r) if p + r else 0.0

    def to_json(self) -> dict[str, Any]:
        return {
            "TPV": self.tp,
            "FPV": self.fp,
            "FNV": self.fn,
            "TNV": self.tn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def score_confusion(
    predicted: Iterable[Hashable],
    truth: Iterable[Hashable],
    population: Optional[Iterable[Hashable]] = None,
) -> ConfusionCounts:
    """Count agreement between two positive-label sets over one population.

    Without an explicit population the universe is the union of both sets,
    so TNV is then 0.
    """
    pred, true = set(predicted), set(truth)
    universe = set(population) if population is not None else pred | true
    if not (pred | true) <= universe:
        raise ValueError("labels outside the population")
    tp = len(pred & true)
    fp = len(pred - true)
    fn = len(true - pred)
    return ConfusionCounts(tp, fp, fn, len(universe) - tp - fp - fn)


def fmt_metric(value: Optional[float], digits: int = 4) -> str:
    return UNDEFINED if value is None else f"{value:.{digits}f}"
