"""Exception types shared across the package."""


class VaxmpcError(Exception):
    """Base class for all package errors."""


class ValidationError(VaxmpcError, ValueError):
    """Raised when numeric input data violates a documented precondition."""


class ContractViolation(VaxmpcError, ValueError):
    """Raised when callers combine objects inconsistently (shape mismatch,
    missing records) rather than passing bad numbers."""


class SolverFailure(VaxmpcError, RuntimeError):
    """Raised when the optimal-control solver encounters non-finite values."""
