"""Deterministic ring scatterer dynamics, boundary-driven currents and lazy-walk comparisons."""
from __future__ import annotations

__version__ = "0.1.0"
