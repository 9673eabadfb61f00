"""Error taxonomy shared across the library.

The CLI maps these onto exit codes: ValidationError -> 1, CapacityError -> 2,
NumericalError -> 3.  Everything else is a bug.
"""


class ValidationError(ValueError):
    """Malformed input: bad graph, inconsistent shapes, out-of-range parameter."""


class CapacityError(RuntimeError):
    """Requested computation exceeds a declared dense-size guard."""


class NumericalError(RuntimeError):
    """Numerical failure: rate-cap violation, non-convergence, criticality."""
