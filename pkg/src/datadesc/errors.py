"""Exception hierarchy for the datadesc package.

Everything raised deliberately by this package derives from :class:`DatadescError`,
so callers can distinguish tool errors from programming errors. I/O problems
(unreadable files) propagate as the builtin ``OSError`` family untouched.
"""
from __future__ import annotations


class DatadescError(Exception):
    """Base class for all errors raised by this package."""


class MalformedInputError(DatadescError):
    """A dataset file violates the input contract (e.g. a header with no columns)."""


class ContractViolationError(DatadescError):
    """An argument violates an operation's precondition (bad index, bad mode, ...)."""


class ConfigurationError(DatadescError):
    """A run or provider configuration is unusable (missing credential, bad file)."""


class ProviderUnavailableError(DatadescError):
    """All completion attempts failed; ``last_cause`` carries the final failure."""

    def __init__(self, message: str, last_cause: Exception | None = None):
        super().__init__(message)
        self.last_cause = last_cause


class SemanticParseError(DatadescError):
    """A semantic-profile response stayed unparseable after all JSON retries."""

    def __init__(self, message: str, raw_response: str = ""):
        super().__init__(message)
        self.raw_response = raw_response


class GenerationError(DatadescError):
    """A description stage failed for a dataset (wraps the causing error)."""


class BenchmarkValidationError(DatadescError):
    """A benchmark bundle references unknown ids; ``offenders`` lists them."""

    def __init__(self, message: str, offenders: list[str] | None = None):
        super().__init__(message)
        self.offenders = offenders or []


class EmptyCorpusError(DatadescError):
    """An index was requested over zero documents."""


class ScoreParseError(DatadescError):
    """A judge response did not contain parseable scores after the retry."""

    def __init__(self, message: str, raw_response: str = ""):
        super().__init__(message)
        self.raw_response = raw_response
