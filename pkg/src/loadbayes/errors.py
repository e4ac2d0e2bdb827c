"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: bad field value, missing file, inconsistent settings."""


class SimulationError(RuntimeError):
    """Numerical failure during trajectory integration (non-finite state)."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class InitializationError(RuntimeError):
    """Steady-state solve or sampler initialization failed."""
