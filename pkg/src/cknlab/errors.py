"""Exception types with stable machine-readable codes."""


class LabError(Exception):
    """Base error carrying a short code usable in tests and CLI output."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class ParameterError(LabError):
    """Invalid weight/integrability parameters."""


class GridError(LabError):
    """Invalid grid or field geometry."""


class QuadratureError(LabError):
    """Quadrature budget exhausted or degenerate integrand."""


class SolverError(LabError):
    """Linear solve did not reach the requested tolerance."""
