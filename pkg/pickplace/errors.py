# pickplace/errors.py
from __future__ import annotations


class PickPlaceError(Exception):
    """Base class for every error raised by the library."""


class ArgumentError(PickPlaceError, ValueError):
    pass


class BoundsError(ArgumentError):
    """A pixel or world position fell outside the workspace."""


class ConfigError(PickPlaceError):
    pass


class LogicError(PickPlaceError, RuntimeError):
    pass


class SimulationError(PickPlaceError):
    """The planar solver produced a non-finite or otherwise unusable state."""
