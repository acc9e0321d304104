"""Shared exception types. CLI exit codes map onto these classes."""


class ContractViolation(ValueError):
    """A precondition was violated (dimension mismatch, invalid argument)."""


class DataFormatError(ValueError):
    """A file failed validation (bad magic, truncated payload, non-finite data)."""


class ConvergenceFailure(RuntimeError):
    """An iterative numerical routine failed to converge."""
