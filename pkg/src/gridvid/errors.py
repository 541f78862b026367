"""Exception types shared across the package."""


class GridVidError(Exception):
    """Base class for all library errors."""


class ShapeError(GridVidError, ValueError):
    """Operands have incompatible grid/tensor shapes."""


class FormatError(GridVidError, ValueError):
    """A serialized file or stream is malformed, truncated, or unsupported."""


class EncodeError(GridVidError, ValueError):
    """Input cannot be represented by the codec (e.g. coefficient overflow)."""
