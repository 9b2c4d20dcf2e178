"""Exception types shared across the package."""


class SpeckleAuthError(Exception):
    """Base class for package-specific failures."""


class DegenerateInputError(SpeckleAuthError, ValueError):
    """Input carries no usable signal (e.g. a constant image)."""


class ConfigurationError(SpeckleAuthError, ValueError):
    """An optical/sensor configuration violates a sampling or geometry guard."""


class EnrollConflictError(SpeckleAuthError):
    """An id is already enrolled with different content."""


class UnknownIdError(SpeckleAuthError, KeyError):
    """Lookup of an id (or of a matching config entry) failed."""


class NonSeparableError(SpeckleAuthError, ValueError):
    """Score populations overlap; no threshold separates them.

    Carries the offending boundary values so callers can report them.
    """

    def __init__(self, genuine_min, impostor_max):
        self.genuine_min = genuine_min
        self.impostor_max = impostor_max
        super().__init__(
            f"populations overlap: min genuine {genuine_min!r} <= "
            f"max impostor {impostor_max!r}"
        )
