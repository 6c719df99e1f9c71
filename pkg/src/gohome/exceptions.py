"""Exception hierarchy shared across the package."""


class GohomeError(Exception):
    """Base class for all package-specific errors."""


class MalformedMapError(GohomeError):
    """A lane graph or lanelet violates its structural invariants."""


class DomainError(GohomeError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ShapeMismatchError(GohomeError, ValueError):
    """Tensor shapes do not match a layer or operation signature."""


class BackwardStateError(GohomeError, RuntimeError):
    """backward() was called twice on the same computation graph."""


class SceneInputError(GohomeError, ValueError):
    """A scene or track is unusable as model input."""


class SceneParseError(GohomeError, ValueError):
    """A scene file violates the schema.

    ``location`` is a JSON-pointer-style path to the offending field.
    """

    def __init__(self, message: str, location: str = ""):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


class GridAlignmentError(GohomeError, ValueError):
    """Heatmap grids with different metadata cannot be combined."""


class TargetOutsideGridError(GohomeError):
    """Ground-truth endpoint falls outside the heatmap grid.

    Raised as a skip signal: training samples hitting this are dropped,
    not treated as failures.
    """


class ConfigError(GohomeError, ValueError):
    """A run configuration is invalid or contains unknown keys."""


class NumericsError(GohomeError, RuntimeError):
    """A numeric failure (NaN/Inf loss) aborted a run."""
