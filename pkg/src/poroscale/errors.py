"""Exception hierarchy shared by all solver modules.

Exit statuses follow the CLI contract: 2 for configuration problems,
3 for solver convergence failures, 4 for infeasible geometry.
"""


class PoroscaleError(Exception):
    exit_status = 1


class ConfigError(PoroscaleError):
    """Invalid or inconsistent run configuration."""

    exit_status = 2


class ConvergenceError(PoroscaleError):
    """An iterative solver hit its iteration cap before reaching tolerance."""

    exit_status = 3

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class GeometryError(PoroscaleError):
    """Geometry that cannot be built or used (empty fluid, misaligned scales)."""

    exit_status = 4
