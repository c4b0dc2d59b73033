"""Synthetic suites, end-to-end runs, scoring, outputs and replay."""
