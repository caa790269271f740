"""Exception hierarchy shared across the package.

The CLI maps these families onto exit codes, so new exceptions should
subclass whichever base matches the failure domain.
"""


class AuscultError(Exception):
    """Base class for all package errors."""


class InvalidConfigError(AuscultError):
    """A configuration value violates its documented constraints."""


class DataError(AuscultError):
    """Problems with input data: audio files, manifests, labels."""


class DecodeError(DataError):
    """Malformed or unsupported audio container/codec."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ParseError(DataError):
    """Malformed text input (manifest rows, label tokens)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DatasetLayoutError(DataError):
    """Dataset directory does not match the requested layout."""


class SplitError(DataError):
    """A class cannot be split/balanced as requested."""


class TooShortError(DataError):
    """Audio clip shorter than the minimum an operation requires."""


class UnsupportedRateError(DataError):
    """Sample rate outside what the pipeline can process."""


class ModelError(AuscultError):
    """Problems with the model: shapes, state, stored artifacts."""


class ShapeError(ModelError):
    """Tensor shapes inconsistent with the operation's contract."""


class StateError(ModelError):
    """Operation invoked in the wrong mode (e.g. backward without a trace)."""


class NotAModelError(ModelError):
    """File is not a model artifact (bad magic bytes)."""


class VersionError(ModelError):
    """Model artifact written by an unknown format version."""


class CorruptModelError(ModelError):
    """Model artifact fails checksum or structural validation."""


class DivergenceError(ModelError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, batch, value):
        super().__init__(
            f"non-finite loss {value!r} at epoch {epoch}, batch {batch}"
        )
        self.epoch = epoch
        self.batch = batch
