"""Semantic exception hierarchy shared across the package."""


class FlexbalError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(FlexbalError, ValueError):
    """Inputs violate a documented contract (shape, domain, finiteness)."""


class DegenerateTargetError(ValidationError):
    """The target mean vector has (numerically) zero sup-norm.

    Several operations normalize by the largest-magnitude target
    coordinate; they are undefined when it vanishes.  Adding a constant
    covariate (the ingest default) avoids this.
    """


class DataError(FlexbalError):
    """A dataset could not be parsed or fails schema checks."""


class SolverFailure(FlexbalError):
    """An iterative or pivoting solver failed to produce a usable answer.

    Carries a ``diagnostics`` dict with solver state (iteration counts,
    best objective seen, residuals) for post-mortems.
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class PrecursorInfeasibleError(SolverFailure):
    """The per-sign budget LP has no feasible point at the given budget."""


class UsageError(FlexbalError):
    """Command line arguments are inconsistent or incomplete."""
