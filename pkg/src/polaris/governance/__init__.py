from .anomaly import AnomalyBaseline, AnomalyFlag, EmptyHistoryError, detect_anomalies, select_history, z_mad
from .metrics import UNDEFINED, ConfusionCounts, fmt_metric, score_confusion
from .playbook import Action, Playbook, RoutingDisposition, route
from .policy import (
    BLOCKING_KINDS,
    VIOLATION_KINDS,
    HistoryEntry,
    PolicyLookup,
    PolicyRecord,
    PolicyStore,
    Violation,
    check_violations,
    retrieve_policy,
    vendor_key,
)
from .risk import RiskAssessment, risk_assess, tier_for

__all__ = [
    "BLOCKING_KINDS",
    "UNDEFINED",
    "VIOLATION_KINDS",
    "Action",
    "AnomalyBaseline",
    "AnomalyFlag",
    "ConfusionCounts",
    "EmptyHistoryError",
    "HistoryEntry",
    "Playbook",
    "PolicyLookup",
    "PolicyRecord",
    "PolicyStore",
    "RiskAssessment",
    "RoutingDisposition",
    "Violation",
    "check_violations",
    "detect_anomalies",
    "fmt_metric",
    "retrieve_policy",
    "risk_assess",
    "route",
    "score_confusion",
    "select_history",
    "tier_for",
    "vendor_key",
]
