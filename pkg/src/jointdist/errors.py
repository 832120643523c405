"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Incompatible or malformed tensor shapes."""


class DTypeError(TypeError):
    """Mixed or unsupported dtypes in a tensor operation."""


class DomainError(ValueError):
    """A value fell outside the domain of an operation or distribution.

    Attributes:
      op: name of the operation or distribution that rejected the value.
      index: position of the first offending element (payload coordinates),
        or None when not applicable.
    """

    def __init__(self, op, message, index=None):
        self.op = op
        self.index = index
        where = "" if index is None else f" at index {tuple(int(i) for i in index)}"
        super().__init__(f"{op}: {message}{where}")


class UnsupportedOpError(TypeError):
    """The operation cannot be lifted over a hidden batch axis."""


class StructureError(ValueError):
    """A structured value does not conform to the expected structure."""

    def __init__(self, message, path=None):
        self.path = path
        prefix = "" if path is None else f"at {path}: "
        super().__init__(prefix + message)


class ValueShapeError(StructureError):
    """A provided node value is shape-incompatible with its distribution."""


class CycleError(ValueError):
    """The dependency graph of a named model contains a cycle."""

    def __init__(self, cycle):
        self.cycle = tuple(cycle)
        super().__init__("dependency cycle: " + " -> ".join(self.cycle))


class NotIndependentError(ValueError):
    """Analytic moments requested of a joint with dependent components."""


class VectorizationError(ShapeError):
    """A manually vectorized model produced wrongly shaped samples."""


class ConfigError(ValueError):
    """Unknown model id or invalid hyperparameters."""
