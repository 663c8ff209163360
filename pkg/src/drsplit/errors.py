"""Exception and warning types shared across the package."""


class DimensionError(ValueError):
    """A point or matrix has the wrong shape for the object it is used with."""


class ConstructionError(ValueError):
    """Invalid parameters were passed to a function or cone constructor."""


class InnerSolverError(RuntimeError):
    """An iterative inner minimization did not reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class AmbiguousSupportError(RuntimeError):
    """Support identification stopped with unresolved indices.

    ``ambiguous`` holds the 0-based indices whose sign pattern never
    separated; ``partial`` holds the partially identified partition.
    """

    def __init__(self, message, ambiguous, partial=None):
        super().__init__(message)
        self.ambiguous = frozenset(ambiguous)
        self.partial = partial


class OracleError(RuntimeError):
    """A brute-force oracle could not produce a trustworthy answer."""


class RankDeficiencyWarning(UserWarning):
    """A supplied basis had linearly dependent columns; they were dropped."""
