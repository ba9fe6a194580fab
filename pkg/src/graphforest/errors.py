"""Exception types shared across the package."""


class GraphForestError(Exception):
    """Base class for every error raised by graphforest."""


class GraphValidationError(GraphForestError, ValueError):
    """Input violates a graph invariant (bad ids, non-finite values, ...)."""


class DatasetFormatError(GraphForestError, ValueError):
    """Malformed dataset file; message carries the path and line number."""


class DegenerateSubspaceError(GraphForestError, RuntimeError):
    """A sampled subspace cannot support training (too few label classes).

    Signals that the node-sampling fraction is too small or the labels
    are too sparse for the requested ensemble.
    """

    def __init__(self, message: str, model_index: int | None = None):
        super().__init__(message)
        self.model_index = model_index
