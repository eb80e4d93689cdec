"""Exception and warning types raised across the package."""


class QdmdError(Exception):
    """Base class for every error raised by qdmd."""


class ZeroMatrixError(QdmdError):
    pass


class NonConvergenceError(QdmdError):
    pass


class StepTooLargeError(QdmdError):
    pass


class RegisterOverflowError(QdmdError):
    pass


class UnknownRegisterError(QdmdError):
    pass


class LayoutMismatchError(QdmdError):
    pass


class SingularValueCollisionError(QdmdError):
    pass


class BadBasisLabelsError(QdmdError):
    pass


class DegenerateBranchError(QdmdError):
    pass


class ZeroReferenceOverlapError(QdmdError):
    pass


class DimensionMismatchError(QdmdError):
    pass


class MissingIndexError(QdmdError):
    pass


class EmptySpectrumError(QdmdError):
    pass


class BoundViolationError(QdmdError):
    pass


class ZeroEigenvalueError(QdmdError):
    pass


class GridTooCoarseError(QdmdError):
    pass


class DegenerateDistributionError(QdmdError):
    pass


class DomainError(QdmdError):
    pass


class ValidationError(QdmdError):
    pass


class ParseError(QdmdError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IllConditionedWarning(UserWarning):
    """Eigenvector basis is close to singular (near-defective operator)."""
