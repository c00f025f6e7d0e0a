"""Exception types shared across the pipeline."""


class AccimgError(Exception):
    """Base class for all toolkit errors."""


class SourceUnderflowError(AccimgError):
    """A source corpus has fewer eligible pairs than the sample requests."""

    def __init__(self, source: str, available: int, requested: int):
        self.source = source
        self.available = available
        self.requested = requested
        super().__init__(
            f"source {source!r} has {available} eligible pairs, "
            f"need {requested} (short by {requested - available})"
        )


class TransientError(AccimgError):
    """Provider failure that is safe to retry (timeouts, 429, 5xx)."""


class PermanentError(AccimgError):
    """Provider failure that will not succeed on retry (bad request, auth)."""


class BlockedError(AccimgError):
    """Provider moderation refused the request. Terminal, never retried."""

    def __init__(self, reason: str = "moderation block"):
        self.reason = reason
        super().__init__(reason)


class ValidationFailed(AccimgError):
    """A generated prompt still has hard rule violations after the repair round."""

    def __init__(self, violations):
        self.violations = list(violations)
        rules = ", ".join(v.rule for v in self.violations)
        super().__init__(f"prompt failed validation: {rules}")


class CheckpointMismatchError(AccimgError):
    """An existing checkpoint was written under a different run configuration."""


class DegenerateAgreementError(AccimgError):
    """Agreement is undefined: expected disagreement is zero (all values identical)."""
