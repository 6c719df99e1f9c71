"""Lane-graph trajectory prediction with sparse curvilinear heatmap decoding."""

from .exceptions import (
    BackwardStateError,
    ConfigError,
    DomainError,
    GohomeError,
    GridAlignmentError,
    MalformedMapError,
    NumericsError,
    SceneInputError,
    SceneParseError,
    ShapeMismatchError,
    TargetOutsideGridError,
)

from .estimator import GohomePredictor

__version__ = "0.1.0"

__all__ = [
    "GohomePredictor",
    "BackwardStateError",
    "ConfigError",
    "DomainError",
    "GohomeError",
    "GridAlignmentError",
    "MalformedMapError",
    "NumericsError",
    "SceneInputError",
    "SceneParseError",
    "ShapeMismatchError",
    "TargetOutsideGridError",
    "__version__",
]
