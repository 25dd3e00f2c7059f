"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Raised when matrix or vector shapes do not agree."""


class EmptySetError(ValueError):
    """Raised when an operation needs a nonempty set but got an empty one."""


class SolverError(RuntimeError):
    """Raised on numerical failure or iteration caps inside the LP/MILP layer."""


class InfeasibleDesignError(RuntimeError):
    """Raised when no separating input exists at the requested horizon."""
