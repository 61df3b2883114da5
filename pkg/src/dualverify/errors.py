"""Exception types raised across the package."""


class VerificationError(ValueError):
    """Base class for all errors raised by dualverify."""


class ShapeError(VerificationError):
    pass


class UnsupportedActivationError(VerificationError):
    pass


class InvalidIntervalError(VerificationError):
    pass


class FormatError(VerificationError):
    """Malformed JSON document (network, input set, spec or dataset)."""


class PreconditionError(VerificationError):
    pass
