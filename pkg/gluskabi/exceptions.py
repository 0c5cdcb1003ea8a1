"""
Exception and warning classes raised by gluskabi.

Every error carries an ``exit_code`` (used by the command line) and a
``details`` dict with structured diagnostics.
"""


class GluskabiError(Exception):
    """Base class of all gluskabi errors."""
    exit_code = 1

    def __init__(self, message, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self):
        return {"error": type(self).__name__,
                "message": self.message,
                "details": {k: _plain(v) for k, v in self.details.items()}}


def _plain(v):
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if hasattr(v, "shape") and hasattr(v, "tolist"):
        # arrays are summarized, iterates can hold thousands of values
        flat = v.ravel().tolist()
        return {"shape": list(v.shape),
                "max_abs": max((abs(x) for x in flat), default=0.0)}
    return str(v)


class SchemaError(GluskabiError):
    """Malformed input: problem files, unknown names, invalid parameters."""
    exit_code = 2


class SolverError(GluskabiError):
    """A numerical backend failed to converge or hit a guard."""
    exit_code = 3


class InfeasibleProblemError(GluskabiError):
    """The problem is well formed but has no (unique) solution."""
    exit_code = 4


class DimensionError(SchemaError):
    pass


class ZeroPolynomialError(SchemaError):
    pass


class UnsupportedOperatorError(SchemaError):
    pass


class NotAMemberError(SchemaError):
    """Boundary data that do not belong to the declared type."""


class DegreeCapExceeded(SolverError):
    pass


class NotCoprimeError(InfeasibleProblemError):
    pass


class NotMinimalError(InfeasibleProblemError):
    pass


class SingularWronskianError(InfeasibleProblemError):
    pass


class SingularBoundaryError(InfeasibleProblemError):
    pass


class InconsistentBoundaryError(InfeasibleProblemError):
    pass


class SignChangeWarning(UserWarning):
    """Boundary data of the exponential type have opposite signs."""


class LowAccuracyWarning(UserWarning):
    """Derivatives were taken by finite differences of user samples."""


class ExperimentalWarning(UserWarning):
    """A code path that is only best-effort (MIMO completions, printed EL form)."""
