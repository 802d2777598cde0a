"""Exception types shared across the package."""


class TTLawError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(TTLawError):
    """Shape mismatch between tensors, features or data.

    Carries the offending mode index (1-based) in ``mode`` when known.
    """

    def __init__(self, message, mode=None):
        super().__init__(message)
        self.mode = mode


class CapExceededError(TTLawError):
    """Refusal to materialize a dense tensor above the entry cap."""

    def __init__(self, message, required):
        super().__init__(message)
        self.required = required


class SingularGaugeError(TTLawError):
    """A gauge matrix is numerically singular (condition estimate > 1e14)."""


class InputError(TTLawError):
    """Invalid value passed to an evaluation routine (non-finite, wrong length)."""


class ConfigError(TTLawError):
    """Invalid configuration; maps to CLI exit code 2."""


class StructureError(TTLawError):
    """Incompatible block patterns, selection tables or core chains."""


class RepresentationError(TTLawError):
    """A requested function cannot be expressed in the given dictionary."""


class SingularityError(TTLawError):
    """State hits a pole of the law (e.g. coincident particles)."""


class DomainError(TTLawError):
    """Parameter outside the mathematical domain of a formula."""


class NumericalAbortError(TTLawError):
    """Training hit a non-finite loss; maps to CLI exit code 3.

    ``snapshot`` holds a small diagnostics dict (sweep, position, type,
    last finite loss) for post-mortem inspection.
    """

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot or {}
