"""Numerical laboratory for oscillatory integral operators with homogeneous phases."""
from __future__ import annotations

__version__ = "0.1.0"
