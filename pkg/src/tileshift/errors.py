"""Exception hierarchy for tileshift."""


class TileshiftError(Exception):
    """Base class for all tileshift errors."""


class DimensionMismatchError(TileshiftError):
    """Image dimensions are incompatible with a transform or tiling."""


class VariantMismatchError(TileshiftError):
    """Two transforms of different variants were combined."""


class InfeasibleCopiesError(TileshiftError):
    """A copy specification cannot cover all destination tiles."""


class ConfigError(TileshiftError):
    """Invalid engine or CLI configuration."""


class IOFailure(TileshiftError):
    """An image or artifact file could not be read or written."""


class BackendError(TileshiftError):
    """A denoiser backend failed or is unavailable."""


class ProtocolError(BackendError):
    """A remote backend violated the wire protocol."""
