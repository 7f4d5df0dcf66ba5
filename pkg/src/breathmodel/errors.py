"""Exception hierarchy shared by every module."""


class BreathModelError(Exception):
    """Base class; the CLI maps subclasses to machine-readable error kinds."""

    kind = "error"


class ConfigError(BreathModelError, ValueError):
    kind = "config"


class DegenerateInputError(BreathModelError, ValueError):
    kind = "degenerate-input"


class SegmentationError(BreathModelError, ValueError):
    kind = "segmentation"


class InsufficientDataError(BreathModelError, ValueError):
    kind = "insufficient-data"


class ShapeError(BreathModelError, ValueError):
    kind = "shape"


class SpecError(BreathModelError, ValueError):
    kind = "spec"


class NumericError(BreathModelError, FloatingPointError):
    kind = "numeric"


class GraphError(BreathModelError, RuntimeError):
    kind = "graph"


class StratificationError(BreathModelError, ValueError):
    kind = "stratification"


class SchemaError(BreathModelError, ValueError):
    kind = "schema"


class VersionError(BreathModelError, ValueError):
    kind = "version"


class CorruptPayloadError(BreathModelError, ValueError):
    kind = "corrupt-payload"
