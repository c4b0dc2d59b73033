"""Governed plan-select-act orchestration for invoice workflows."""

__version__ = "0.1.0"
