"""Degenerate complex-coefficient p-growth systems: solver, toolkit, lab."""

__version__ = "0.1.0"

from . import algebra, analysis, fields, grid, harness, snapshots, solver  # noqa: F401
