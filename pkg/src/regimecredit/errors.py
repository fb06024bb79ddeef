class RegimeCreditError(Exception):
    """Base class for all library errors."""


class ValidationError(RegimeCreditError):
    """Invalid input data or configuration (CLI exit code 1)."""


class NumericalError(RegimeCreditError):
    """Numerical failure: singular matrix, non-convergence, underflow (CLI exit code 2)."""
