class CompassError(Exception):
    """Base class for library errors."""


class SketchMismatchError(CompassError, ValueError):
    """Sketches combined or compared with different configs or seeds."""


class EstimationError(CompassError, RuntimeError):
    """An estimate could not be produced within the configured limits."""


class GuardExceeded(CompassError, RuntimeError):
    """An exact computation would exceed its size guard."""


class CatalogError(CompassError, ValueError):
    """Bad schema, malformed CSV input, or unknown table/column."""


class QuerySpecError(CompassError, ValueError):
    """Invalid query specification or predicate."""
