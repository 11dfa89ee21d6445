"""Exception and warning types shared across the package."""


class DegellError(Exception):
    """Base class for all errors raised by this package."""


class InvalidDomainError(DegellError):
    pass


class InvalidResolutionError(DegellError):
    pass


class ExpressionError(DegellError):
    """Raised when a coefficient expression fails to parse."""

    def __init__(self, message, position=None):
        super().__init__(message)
        self.position = position


class EvaluationError(DegellError):
    """Raised when a coefficient evaluates to a non-finite value."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class ComparabilityError(DegellError):
    """One quadratic form vanishes where the other does not."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class InvalidDataError(DegellError):
    pass


class TransposeMismatchError(DegellError):
    pass


class CoercivityError(DegellError):
    pass


class PreconditionError(DegellError):
    pass


class SingularSystemError(DegellError):
    pass


class InvalidRequestError(DegellError):
    pass


class InvalidInputError(DegellError):
    def __init__(self, message, offending=None):
        super().__init__(message)
        self.offending = offending


class NoPoincareError(DegellError):
    """The degenerate gradient form has extra kernel vectors: no spectral gap."""


class InvalidBallError(DegellError):
    pass


class SpecFormatError(DegellError):
    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class SubunitWarning(UserWarning):
    pass


class RankAmbiguityWarning(UserWarning):
    pass


class DegenerateSamplingError(DegellError):
    pass
