"""Desk-scale goal-conditioned pick-and-place learning for deformable rearrangement."""
from __future__ import annotations

__version__ = "0.3.0"
