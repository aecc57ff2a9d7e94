"""Exception hierarchy for the feedresponse package."""


class FeedResponseError(Exception):
    """Base class for all errors raised by this package."""


class ModelDomainError(FeedResponseError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DataValidationError(FeedResponseError, ValueError):
    """Input data violates a record or file contract.

    ``row`` is the 1-based line number in the source file when the error
    comes from file parsing, else None.
    """

    def __init__(self, message: str, *, row: int | None = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class ConfigError(DataValidationError):
    """A run-configuration file is malformed or contains unknown keys."""


class ZeroLikelihoodError(FeedResponseError):
    """The observed data has probability zero under the given parameters.

    Carries the ids of the offending users so callers can report which
    records are impossible rather than just that some record is.
    """

    def __init__(self, user_ids):
        self.user_ids = tuple(user_ids)
        shown = ", ".join(self.user_ids[:5])
        if len(self.user_ids) > 5:
            shown += ", ..."
        super().__init__(
            f"{len(self.user_ids)} user record(s) have zero probability "
            f"under these parameters: {shown}"
        )


class EstimationError(FeedResponseError):
    """A fit cannot be run or did not produce a usable result."""


class SeparationError(EstimationError):
    """Logistic regression data is separable; the MLE does not exist."""


class UndefinedStatisticError(FeedResponseError):
    """A statistic is undefined for the given input (e.g. constant ranks)."""
