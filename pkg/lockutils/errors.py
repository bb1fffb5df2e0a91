class LockLabError(Exception):
    """Base class for every error raised by lockutils."""


class DomainError(LockLabError, ValueError):
    """An argument lies outside the supported domain (bad m, coalition size, ...)."""


class DimensionMismatch(LockLabError, ValueError):
    pass


class AllZeroError(LockLabError, ValueError):
    pass


class SamePartyError(LockLabError, ValueError):
    pass


class ParseError(LockLabError, ValueError):
    """
    Raised on malformed set, protocol, partition or scenario text.

    Attributes:
        line (Optional[int]): 1-based line number of the offending line, if known.
    """
    def __init__(self, message: str, line: int = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class InvariantError(LockLabError, ValueError):
    pass


class CertificateNotFound(LockLabError):
    pass


class ShapeError(LockLabError, ValueError):
    pass


class LocalityError(LockLabError):
    """A measurement acts across blocks of the declared partition."""


class NoOpenPartition(LockLabError):
    pass


class ConfigError(LockLabError, ValueError):
    pass


class BudgetExceeded(LockLabError):
    pass


class SoundnessViolation(LockLabError, RuntimeError):
    """An internal consistency property was falsified. Never expected."""


class CorruptLog(LockLabError):
    pass
