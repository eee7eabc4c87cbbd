"""
Exception hierarchy for the ForestAlign pipeline.
Every failure the library raises on purpose derives from ForestAlignError so
callers (the CLI, the trial runner) can map it to an exit code or a report row.
"""

from typing import Optional


class ForestAlignError(Exception):
    """Base class; `stage` names the pipeline stage the error escaped from"""

    def __init__(self, message: str, stage: Optional[str] = None):
        super().__init__(message)
        self.stage = stage

    def __str__(self) -> str:
        message = super().__str__()
        if self.stage:
            return f"[{self.stage}] {message}"
        return message


class InvalidParameterError(ForestAlignError, ValueError):
    pass


class EmptyInputError(ForestAlignError):
    pass


class DegenerateNeighborhoodError(ForestAlignError):
    pass


class InsufficientDataError(ForestAlignError):
    pass


class CollapsedComponentError(ForestAlignError):
    pass


class EmptyGroupError(ForestAlignError):
    pass


class DegenerateCorrespondencesError(ForestAlignError):
    pass


class NoOverlapError(ForestAlignError):
    """No correspondence within the distance threshold; keeps the last good estimate"""

    def __init__(self, message: str, last_estimate=None, stage: Optional[str] = None):
        super().__init__(message, stage=stage)
        self.last_estimate = last_estimate


class CloudParseError(ForestAlignError):
    """Malformed point-cloud file. offset_kind is 'line' or 'byte'."""

    def __init__(self, message: str, path: str = '', offset_kind: str = 'line', offset: int = 0):
        super().__init__(f"{path}: {offset_kind} {offset}: {message}")
        self.path = path
        self.offset_kind = offset_kind
        self.offset = offset


# Errors that mean "the data cannot be grouped", mapped to CLI exit code 3
DATA_ERRORS = (InsufficientDataError, CollapsedComponentError, EmptyGroupError)

# Errors that mean "the clouds do not overlap", mapped to CLI exit code 2
OVERLAP_ERRORS = (NoOverlapError, DegenerateCorrespondencesError)
