"""Exception types shared across the solver suite."""


class SolverFailure(RuntimeError):
    """An iterative or direct solve did not produce a usable solution.

    Carries the relative-residual history of the failed iteration (empty
    for direct-solve failures) so callers can diagnose stagnation.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []


class ModelMismatch(ValueError):
    """A surrogate model does not match the requested discretization."""


class FormatError(ValueError):
    """A dataset/model/raster file is corrupt or has an incompatible header."""
