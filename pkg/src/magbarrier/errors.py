"""Exception types shared across the package.

The CLI maps these to exit codes: ConfigurationError -> 2, NumericalError
(including InvariantViolation) -> 3. A verification check that runs fine but
fails its inequality is not an exception; it is a FAILED line and exit 1.
"""


class MagbarrierError(Exception):
    """Base class for all package errors."""


class ConfigurationError(MagbarrierError):
    """Bad or impossible request: domain violations, capability limits."""


class NumericalError(MagbarrierError):
    """A computation ran but missed its accuracy contract."""


class InvariantViolation(NumericalError):
    """A mathematically guaranteed property failed in the computed data."""
