"""Exception hierarchy shared by all pipeline stages.

Every error carries an optional ``stage`` label so the CLI can report which
pipeline step failed and map the failure to an exit code.
"""

from __future__ import annotations


class GridMapError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message)
        self.stage = stage

    def __str__(self) -> str:
        base = super().__str__()
        if self.stage:
            return f"[stage={self.stage}] {base}"
        return base


class InputError(GridMapError):
    """Unreadable, malformed, or otherwise unusable input."""

    exit_code = 2


class ValidationError(InputError):
    """Input parsed but violates a documented precondition."""


class UnsupportedTopologyError(InputError):
    """Holes, islands, or boundaries that do not chain into one ring."""


class DegenerateGeometryError(InputError):
    """Zero-area polygons, coincident points, zero-length directions."""


class NumericalError(GridMapError):
    """A linear solve or other numeric step produced a non-finite result."""

    exit_code = 3


class InfeasibleGridError(GridMapError):
    """Fewer candidate cells than regions; no one-to-one layout exists."""

    exit_code = 4
