"""Exception types shared across the pipeline."""

from __future__ import annotations


class DiaristError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(DiaristError):
    """Invalid or missing configuration."""


class OutOfWindowError(DiaristError):
    """Entry date falls outside the configured corpus window."""


class TemplateError(DiaristError):
    """Prompt template references an unresolvable placeholder."""


class ParseError(DiaristError):
    """Model response could not be parsed into the expected structure."""


class BatchOversizeError(DiaristError):
    """A single entry plus template overhead exceeds the token budget."""

    def __init__(self, entry_id: str, tokens: int, budget: int) -> None:
        super().__init__(
            f"entry {entry_id!r} renders to {tokens} tokens, over the {budget} budget; "
            "the corpus filter is misconfigured"
        )
        self.entry_id = entry_id
        self.tokens = tokens
        self.budget = budget


class CredentialError(DiaristError):
    """Authentication failed or credentials are unresolvable; not retriable."""


class TransportError(DiaristError):
    """Provider call failed after exhausting retries."""

    def __init__(self, message: str, attempts: list[str] | None = None) -> None:
        super().__init__(message)
        self.attempts = attempts or []


class MissingRecordError(DiaristError):
    """Replay provider was queried with a request that was never recorded."""


class AuthorizationError(DiaristError):
    """Unknown annotator."""


class ConflictError(DiaristError):
    """Vote conflicts with an existing vote or a completed task."""


class VoteValidationError(DiaristError):
    """Vote violates the gating or completeness rules."""


class IncompleteTaskError(DiaristError):
    """Aggregation requested over tasks that are not complete."""


class UndefinedAlphaError(DiaristError):
    """Krippendorff's alpha is undefined (zero expected disagreement or no pairable data)."""


class UndefinedMetricError(DiaristError):
    """Metric denominator is empty (e.g. empty gold set)."""


class ClusterInitError(DiaristError):
    """Cluster-name initialization failed after the repair re-prompt."""
