"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands passed to a tensor primitive have incompatible shapes."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite value."""


class DatasetFormatError(ValueError):
    """A dataset file could not be parsed into valid graphs."""


class DatasetSchemaError(DatasetFormatError):
    """Graphs in a dataset file disagree on feature or task dimensions."""


class EvaluationError(RuntimeError):
    """Evaluation could not produce a score (e.g. no task with both classes)."""
