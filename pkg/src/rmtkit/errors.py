"""Exception types shared across the toolkit."""


class RmtError(Exception):
    """Base class for all toolkit errors."""


class UnsupportedVariantError(RmtError):
    """Operation not defined for this measure variant (e.g. density of an atom)."""


class NonConvergenceError(RmtError):
    """An iterative scheme failed to stabilise within its budget."""


class DivergenceError(RmtError):
    """The requested integral diverges (e.g. log-integral against an atom at 0)."""


class SingularDesignError(RmtError):
    """Regression design matrix is numerically singular."""


class EmptyFeasibleSetError(RmtError):
    """No grid point satisfies the feasibility constraint."""
