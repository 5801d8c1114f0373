"""Exception hierarchy shared by the solver modules and the CLI."""


class SizewaveError(Exception):
    """Base class for all package errors."""


class DomainError(SizewaveError, ValueError):
    """A coefficient was evaluated outside its declared domain."""


class ConfigError(SizewaveError, ValueError):
    """Malformed or schema-violating run configuration."""


class CapExceededError(SizewaveError):
    """The free boundary left ``[0, L_cap]``."""

    def __init__(self, message, time):
        super().__init__(message)
        self.time = time


class StiffnessError(SizewaveError):
    """Step size underflow in an ODE integration."""


class DegenerateInflowError(SizewaveError):
    """Inflow velocity ``V(0, t)`` vanishes, so the renewal condition loses meaning."""


class NotInflowError(SizewaveError):
    """A backward characteristic reached ``t = t_start`` without hitting ``xi = 0``."""


class ParameterError(SizewaveError, ValueError):
    """Invalid numerical parameter, e.g. a CFL violation."""


class GridMismatchError(SizewaveError, ValueError):
    """Two fields that must share a grid do not."""


class NonConvergenceError(SizewaveError):
    """Monotone iteration hit ``k_max`` with the gap still above tolerance."""

    def __init__(self, message, gaps, slab=None):
        super().__init__(message)
        self.gaps = list(gaps)
        self.slab = slab
