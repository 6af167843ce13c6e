"""Exception types shared across the toolkit."""


class InvalidSpecError(ValueError):
    """Problem definition is inconsistent (bad dimensions, empty regions, ...)."""


class InvalidMaterialError(ValueError):
    """Material constants violate physical bounds."""


class ShapeError(ValueError):
    """Array arguments do not match the expected shapes."""


class SolverError(RuntimeError):
    """Linear solver failed to converge or diverged.

    Carries the final SolveStats in ``stats`` when available.
    """

    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats


class NumericalError(RuntimeError):
    """A numerical procedure (bisection, training) failed."""


class ArchiveFormatError(ValueError):
    """Weight archive or raw64 file is malformed or version-mismatched."""
