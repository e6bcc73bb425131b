"""Exception types shared across the package."""


class KtransferError(Exception):
    """Base class for all package errors."""


class ParseError(KtransferError):
    """A log or registry file is malformed; carries line/column context."""

    def __init__(self, message, path=None, line=None, column=None):
        self.path = path
        self.line = line
        self.column = column
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            if column is not None:
                loc += f" (column {column})"
            loc = f" [{loc}]"
        super().__init__(f"{message}{loc}")


class ReferentialError(ParseError):
    """A log row references a question or KC unknown to the course registry."""


class ConfigError(KtransferError):
    """Invalid configuration: unknown feature family, preset, or bad fold setup."""


class SchemaError(KtransferError):
    """Feature-schema mismatch: wrong dimension, fingerprint, or block layout."""


class SequencingError(KtransferError):
    """An interaction arrived out of timestamp order for its student."""


class MetricError(KtransferError):
    """A metric is undefined for the given inputs (empty or single-class)."""


class TrainingError(KtransferError):
    """Optimization failed (non-finite loss or empty training set)."""


class DataError(KtransferError):
    """Dataset-level problem: not enough eligible students, missing data."""
