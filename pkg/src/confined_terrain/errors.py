"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration or precondition violation."""


class GenerationFailed(RuntimeError):
    """WFC could not produce a consistent tiling."""

    def __init__(self, message: str, restart_count: int):
        super().__init__(f"{message} (restarts: {restart_count})")
        self.restart_count = restart_count


class PlacementError(RuntimeError):
    """Overhang boxes could not be placed within the attempt budget."""


class OutOfBoundsError(RuntimeError):
    """A ground query ray left the terrain."""
