"""Exception types raised across the package."""


class SimulationError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(SimulationError, ValueError):
    """Shapes or sizes violate an operation's contract."""


class NumericalError(SimulationError, RuntimeError):
    """A numerical routine failed to converge or produced non-finite values."""


class DegenerateError(SimulationError, ValueError):
    """Input is degenerate for the requested operation (zero channel, zero weights, ...)."""


class RankDeficiencyError(SimulationError, ValueError):
    """Effective matrix rank is too low to support the requested stream count."""


class ConfigError(SimulationError, ValueError):
    """Invalid or unknown configuration content."""


class DivergenceError(SimulationError, RuntimeError):
    """Training produced non-finite activations, losses, or parameters."""

    def __init__(self, message, layer=None, epoch=None, batch=None):
        super().__init__(message)
        self.layer = layer
        self.epoch = epoch
        self.batch = batch
