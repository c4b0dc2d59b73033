from .documents import (
    FIELDS,
    REQUIRED_FIELDS,
    ExtractedInvoice,
    InvoiceFacts,
    NoiseEvent,
    SyntheticDocument,
    render,
)
from .parser import FieldHint, RepairHints, confidence_for, parse
from .validation import (
    FallbackResult,
    MergeScopeError,
    RepairOutcome,
    RepairTrace,
    RuleFailure,
    ValidatedInvoice,
    ValidatorReport,
    explain,
    merge,
    repair_loop,
    validate,
)

__all__ = [
    "FIELDS",
    "REQUIRED_FIELDS",
    "ExtractedInvoice",
    "FallbackResult",
    "FieldHint",
    "InvoiceFacts",
    "MergeScopeError",
    "NoiseEvent",
    "RepairHints",
    "RepairOutcome",
    "RepairTrace",
    "RuleFailure",
    "SyntheticDocument",
    "ValidatedInvoice",
    "ValidatorReport",
    "confidence_for",
    "explain",
    "merge",
    "parse",
    "render",
    "repair_loop",
    "validate",
]
