"""Exception types shared across the engine."""

from __future__ import annotations


class A2RagError(Exception):
    """Base class for all errors raised by this package."""


class CorpusLoadError(A2RagError):
    """A corpus or summary file could not be parsed or validated."""


class GraphLoadError(A2RagError):
    """A graph file could not be parsed or validated."""


class UnknownNodeError(A2RagError, KeyError):
    """An operation referenced a node id that is not in the graph."""


class DatasetError(A2RagError):
    """A benchmark dataset file could not be parsed or validated."""


class ConfigError(A2RagError):
    """An engine configuration is malformed or references missing files."""


class StageOrderError(A2RagError):
    """A retrieval stage was invoked out of order or more than once."""


class DegeneratePersonalizationError(A2RagError):
    """No usable personalization mass: every seed is isolated and
    dangling-mass redistribution is disabled."""


class OracleError(A2RagError):
    """Base class for oracle failures (mock or remote)."""


class OracleConfigError(OracleError):
    """Remote oracle endpoint configuration is missing or invalid."""


class OracleAuthError(OracleError):
    """The remote endpoint rejected our credentials. Not retryable."""

    def __init__(self, message: str, status_code: int | None = None):
        super().__init__(message)
        self.status_code = status_code


class OracleTransportError(OracleError):
    """Network-level or server-side failure. Retryable up to the budget."""

    def __init__(self, message: str, status_code: int | None = None):
        super().__init__(message)
        self.status_code = status_code


class OracleProtocolError(OracleError):
    """The remote endpoint answered with a payload we cannot interpret."""

    def __init__(self, message: str, body: str | None = None):
        super().__init__(message)
        self.body = body


class RetrievalStageError(OracleError):
    """An oracle failed while a retrieval stage was running.

    Wraps the original failure and names the stage so callers can tell
    where in the escalation the pipeline stopped.
    """

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause
