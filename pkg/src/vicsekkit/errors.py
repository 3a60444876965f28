"""Exception types shared across the toolkit."""


class VicsekError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(VicsekError):
    """An argument violates a documented precondition."""


class SingularFluxError(VicsekError):
    """The normalized alignment field degenerated (|J| below tolerance at alpha=0).

    Carries optional context identifying where the degeneracy happened.
    """

    def __init__(self, message, t=None, particle=None, flux_norm=None):
        super().__init__(message)
        self.t = t
        self.particle = particle
        self.flux_norm = flux_norm


class DegenerateInitialFluxError(SingularFluxError):
    """Initial datum has vanishing |J|_alpha somewhere while alpha = 0."""


class GridMismatchError(VicsekError):
    """Field values do not match the grid they are claimed to live on."""


class SnapshotRangeError(VicsekError):
    """A kinetic snapshot was requested outside the solved time range."""


class ConfigError(VicsekError):
    """Configuration file is missing, malformed, or violates the schema."""

    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key
