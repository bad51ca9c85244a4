"""Exception types shared across the package."""

from __future__ import annotations


class ExeaError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(ExeaError):
    """A configuration value or combination of values is invalid."""


class MalformedLine(ExeaError):
    """A data file contains a line that does not match its format."""

    def __init__(self, path: str, line_no: int, reason: str):
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"{self.path}:{line_no}: {reason}")


class UnknownId(ExeaError):
    """A triple or alignment references an entity id that was never declared."""


class UnknownRelation(ExeaError):
    """A relation has no triples, so statistics over its triples are undefined."""


class ZeroVector(ExeaError):
    """Cosine similarity is undefined for a zero-norm vector."""


class MissingEmbedding(ExeaError):
    """An entity or relation index has no row in the embedding store."""


class NoRelationVectors(ExeaError):
    """The requested relation-vector source is not available in the store."""


class EmptyKg(ExeaError):
    """An operation that needs triples was given a graph without any."""


class NoSeedsWarning(UserWarning):
    """Training proceeds without seed pairs; the two spaces are not tied."""


class EmptyCandidates(ExeaError):
    """A candidate triple set is empty, so the requested ratio is undefined."""


class NotSubset(ExeaError):
    """An explanation contains triples outside its candidate set."""


class TrainerFailure(ExeaError):
    """Training produced non-finite parameters."""


class DegenerateConfig(ExeaError):
    """The synthetic generator cannot honour this parameter combination."""


class InvariantViolation(ExeaError):
    """An internal consistency check failed; names the violated invariant."""

    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        msg = invariant if not detail else f"{invariant}: {detail}"
        super().__init__(msg)
