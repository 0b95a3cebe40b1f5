"""Exception hierarchy shared by all modules.

Each class carries an ``exit_code`` so the CLI can map failures to process
status without inspecting messages.
"""


class CoulombLabError(Exception):
    exit_code = 1


class DomainError(CoulombLabError, ValueError):
    """Argument outside the mathematical domain of an operation."""

    exit_code = 2


class SingularityError(CoulombLabError, ValueError):
    """Kernel evaluated at a coincidence (r = 0 or a lattice point)."""

    exit_code = 3

    def __init__(self, message, indices=None):
        super().__init__(message)
        self.indices = indices


class SolverError(CoulombLabError, RuntimeError):
    """Iterative or linear solver failed to converge or diverged."""

    exit_code = 3

    def __init__(self, message, last_residual=None, last_value=None):
        super().__init__(message)
        self.last_residual = last_residual
        self.last_value = last_value


class BoxTooSmallError(SolverError):
    """Computed support reaches the outer margin of the computational box."""


class DegreeError(CoulombLabError, ValueError):
    """Winding number is ill-defined because |u| is too small on the path."""

    exit_code = 3


class CapabilityError(CoulombLabError, NotImplementedError):
    """Requested (size, method) combination is not supported."""

    exit_code = 2


class ConfigError(CoulombLabError, ValueError):
    """Invalid run configuration; ``field`` names the offending key path."""

    exit_code = 2

    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class ReproductionMismatch(CoulombLabError):
    exit_code = 4
