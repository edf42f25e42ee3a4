"""Exception types shared across the package.

Every error carries a short machine-readable ``code`` so the CLI can emit
stable diagnostics regardless of the human-readable message.
"""


class XviewError(Exception):
    code = "Error"


# calibration / point-cloud parsing

class MissingKey(XviewError):
    code = "MissingKey"


class MalformedNumber(XviewError):
    code = "MalformedNumber"


class WrongArity(XviewError):
    code = "WrongArity"


class TruncatedRecord(XviewError):
    code = "TruncatedRecord"


class NonFiniteValue(XviewError):
    code = "NonFiniteValue"


# pooling

class ViewMismatch(XviewError):
    code = "ViewMismatch"


class ShapeMismatch(XviewError):
    code = "ShapeMismatch"


# binary formats

class BadMagic(XviewError):
    code = "BadMagic"


class ChecksumMismatch(XviewError):
    code = "ChecksumMismatch"


class Truncated(XviewError):
    code = "Truncated"


# CLI / rendering

class ChannelOutOfRange(XviewError):
    code = "ChannelOutOfRange"


# losses

class InvalidDistribution(XviewError):
    code = "InvalidDistribution"
