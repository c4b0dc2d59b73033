"""Engine configuration.

Every tunable constant lives here so a run can record the exact values it used
in its trace header and a config file can override any of them.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

DEFAULT_RULE_WEIGHTS: dict[str, float] = {
    "unknown_vendor": 0.6,
    "blacklisted": 0.9,
    "threshold_breach": 0.5,
    "currency_mismatch": 0.3,
    "duplicate": 0.4,
    "missing_provenance": 0.3,
    "amount_anomaly": 0.4,
    "date_anomaly": 0.2,
}


class ConfigError(ValueError):
    """Raised for invalid or inconsistent configuration values."""


@dataclass(frozen=True)
class RubricWeights:
    compliance: float = 0.4
    sequencing: float = 0.3
    parsimony: float = 0.2
    prior: float = 0.1

    def __post_init__(self) -> None:
        values = self.as_tuple()
        if any(w < 0 for w in values):
            raise ConfigError(f"rubric weights must be non-negative: {values}")
        if not any(w > 0 for w in values):
            raise ConfigError("at least one rubric weight must be positive")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.compliance, self.sequencing, self.parsimony, self.prior)

    def scaled(self, c: float) -> "RubricWeights":
        return RubricWeights(*(c * w for w in self.as_tuple()))


@dataclass(frozen=True)
class EngineConfig:
    # planning
    K: int = 5
    w_sim: float = 0.7
    w_brev: float = 0.3
    max_extra: int = 4
    # selection
    rubric: RubricWeights = field(default_factory=RubricWeights)
    sequencing_penalty: float = 0.25
    # extraction
    L_max: int = 3
    tau_c: float = 0.7
    epsilon: str = "0.01"
    # governance
    k_mad: float = 3.5
    n_min: int = 5
    rule_weights: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_RULE_WEIGHTS))
    t_review: float = 0.3
    t_block: float = 0.8
    lookback_days: int = 90
    enforce_provenance: bool = False
    # execution
    concurrency_limit: int = 4

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.L_max < 0:
            raise ConfigError("L_max must be >= 0")
        if not 0 < self.tau_c <= 1:
            raise ConfigError("tau_c must lie in (0, 1]")
        if self.k_mad <= 0:
            raise ConfigError("k_mad must be positive")
        if self.t_review >= self.t_block:
            raise ConfigError("t_review must be below t_block")
        if self.concurrency_limit < 1:
            raise ConfigError("concurrency_limit must be >= 1")
        if self.max_extra < 1:
            raise ConfigError("max_extra must be >= 1")
        missing = set(DEFAULT_RULE_WEIGHTS) - set(self.rule_weights)
        if missing:
            raise ConfigError(f"rule_weights missing entries: {sorted(missing)}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EngineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "rubric" in kwargs and isinstance(kwargs["rubric"], dict):
            kwargs["rubric"] = RubricWeights(**kwargs["rubric"])
        if "rule_weights" in kwargs:
            merged = dict(DEFAULT_RULE_WEIGHTS)
            merged.update(kwargs["rule_weights"])
            kwargs["rule_weights"] = merged
        if "epsilon" in kwargs:
            kwargs["epsilon"] = str(kwargs["epsilon"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None) -> EngineConfig:
    """Load an EngineConfig from a JSON or YAML file; ``None`` gives defaults."""
    if path is None:
        return EngineConfig()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if data is None:
        return EngineConfig()
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping")
    return EngineConfig.from_dict(data)
