"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value violates its documented invariant."""


class DegenerateGeometryError(ValueError):
    """Geometry is singular (e.g. satellite coincident with the UE)."""


class DataFormatError(ValueError):
    """A serialized dataset/checkpoint file cannot be parsed."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss; carries client/round context."""

    def __init__(self, message, plane_id=None, round_index=None):
        super().__init__(message)
        self.plane_id = plane_id
        self.round_index = round_index
