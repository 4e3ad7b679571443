"""Exception types shared across the package."""


class FbinetError(Exception):
    """Base class for engine errors."""


class ShapeError(FbinetError, ValueError):
    """Tensor or layer shapes do not compose."""


class FormatError(FbinetError, ValueError):
    """A serialized artifact (architecture text, FBIW archive, PNM image) is malformed."""


class ValidationError(FbinetError, ValueError):
    """Architecture and weight archive disagree, or an option is out of its domain."""
