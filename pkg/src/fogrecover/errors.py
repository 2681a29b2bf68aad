"""Exception hierarchy shared by every module in the package."""

from __future__ import annotations


class FogRecoverError(Exception):
    """Base class for all errors raised by fogrecover."""


class ScheduleSyntaxError(FogRecoverError, ValueError):
    """A schedule string does not match the grammar."""

    def __init__(self, message: str, position: int | None = None) -> None:
        self.position = position
        if position is not None:
            message = f"{message} (at offset {position})"
        super().__init__(message)


class PreconditionError(FogRecoverError):
    """An algorithm was called with inputs that violate its contract."""


class UpstreamIncomplete(PreconditionError):
    """A recovery step needs a corrected value that no upstream node has sent."""


class ProtocolError(FogRecoverError):
    """A message arrived that the cascade protocol does not allow."""


class ScenarioError(FogRecoverError, ValueError):
    """A scenario is malformed or cannot be executed."""
