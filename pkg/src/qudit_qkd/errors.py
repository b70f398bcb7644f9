"""Exception hierarchy for the simulator."""


class QKDError(Exception):
    """Base class for all simulator errors."""


class DuplicateCell(QKDError, ValueError):
    pass


class BinOutOfRange(QKDError, ValueError):
    pass


class BinOverflow(QKDError):
    """A delay pushed an occupied cell past the last time bin."""


class NonUnitary(QKDError, ValueError):
    pass


class NotNormalized(QKDError, ValueError):
    pass


class UnknownBasis(QKDError, ValueError):
    pass


class UnsupportedBasis(QKDError, ValueError):
    """No receiver chain / reference detection table exists for the basis."""


class NoSolutions(QKDError):
    pass


class InvalidSetting(QKDError, ValueError):
    pass


class MisalignedLogs(QKDError):
    pass


class InsufficientPairs(QKDError):
    pass


class EmptyKey(QKDError, ValueError):
    pass


class ConfigError(QKDError, ValueError):
    """Bad session configuration (maps to CLI exit code 2)."""
