"""Exception hierarchy shared by all roadfield modules."""


class RoadFieldError(Exception):
    """Base class. ``context`` carries (module, operation, input) for the CLI."""

    def __init__(self, message, *, module=None, operation=None, item=None):
        super().__init__(message)
        self.module = module
        self.operation = operation
        self.item = item


class DomainError(RoadFieldError, ValueError):
    """An argument lies outside the domain of the operation."""


class GeometryError(RoadFieldError, ValueError):
    """Degenerate or inconsistent geometry (meshing, networks)."""


class AssemblyError(RoadFieldError):
    """Finite element assembly failed, e.g. on a degenerate triangle."""


class ConfigurationError(RoadFieldError, ValueError):
    """Invalid run configuration or mismatched inputs."""

    def __init__(self, message, *, line=None, key=None, **kw):
        super().__init__(message, **kw)
        self.line = line
        self.key = key


class NumericalError(RoadFieldError, ArithmeticError):
    """Factorization breakdown or non-finite arithmetic."""


class ConvergenceError(NumericalError):
    """Iteration budget exhausted. ``best_residual`` is the best value reached."""

    def __init__(self, message, best_residual=float("nan"), **kw):
        super().__init__(message, **kw)
        self.best_residual = best_residual


class SearchError(RoadFieldError):
    """Road search could not produce any feasible candidate."""
