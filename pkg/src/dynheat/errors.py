"""Exception types shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2, any
SolverError (including non-convergence) -> 3.  Criterion failures are
reported by value, not by exception.
"""


class DynheatError(Exception):
    """Base class for package errors."""


class ConfigError(DynheatError):
    """Invalid configuration value or malformed config file."""


class SolverError(DynheatError):
    """A numerical routine could not produce a usable result."""


class NonConvergenceError(SolverError):
    """An iteration or search exhausted its budget.

    Carries a ``diagnostics`` dict so callers can report the trace
    (probed values, last increments) instead of a bare message.
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SingularEvaluationError(DynheatError):
    """Kernel evaluated at a point where it is undefined.

    Raised instead of returning inf/nan so quadrature code fails loudly
    when a node collides with the singularity.
    """
