"""Numerical toolkit for complex-action quantum dynamics in a truncated Fock space."""

__version__ = "0.1.0"
