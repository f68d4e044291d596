"""Structured diagnostics for classification error: separation, sweeps and synthetic checks."""

__version__ = "0.1.0"
