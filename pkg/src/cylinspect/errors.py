"""Exception hierarchy shared across the toolkit.

The CLI maps these onto process exit codes: usage problems exit 1, data
problems exit 2, numeric failures exit 3.
"""


class CylinspectError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(CylinspectError):
    """Array or image dimensions are incompatible with the operation."""


class ParameterError(CylinspectError):
    """An argument value is outside its allowed range."""


class DataError(CylinspectError):
    """A dataset is missing, malformed, or unusable."""


class NumericError(CylinspectError):
    """A computation produced non-finite values."""


class StaleCacheError(CylinspectError):
    """A forward cache was reused after consumption or on the wrong model."""


class CheckpointError(CylinspectError):
    """Base class for checkpoint file problems."""


class BadMagicError(CheckpointError):
    """File does not start with the expected magic bytes."""


class VersionError(CheckpointError):
    """Checkpoint format version is not supported."""


class TruncatedError(CheckpointError):
    """Checkpoint file ended before all declared records were read."""
