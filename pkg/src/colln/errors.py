"""Exception hierarchy shared across the engine.

Exit-code mapping used by the CLI: VerificationError -> 1,
ConfigError -> 2, WeightFormatError / ImageFormatError -> 3.
"""


class CollnError(Exception):
    """Base class for all engine errors."""


class ConfigError(CollnError):
    """Invalid configuration: bad shapes, ranges, schedules or flags."""


class WeightFormatError(CollnError):
    """Weight container cannot be read or fails validation."""


class BadMagic(WeightFormatError):
    pass


class BadVersion(WeightFormatError):
    pass


class ChecksumMismatch(WeightFormatError):
    pass


class ShapeMismatch(WeightFormatError):
    pass


class TruncatedBlob(WeightFormatError):
    pass


class ImageFormatError(CollnError):
    """Image input cannot be parsed or has the wrong dimensions."""


class VerificationError(CollnError):
    """A mathematical property check failed."""


class InternalError(CollnError):
    """Invariant violated inside the engine; indicates a bug, not bad input."""
