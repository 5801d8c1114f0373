"""Domain straightening ``xi = x / h(t)`` and the coefficients of the transformed problem."""

import numpy as np

from .errors import DomainError
from .free_boundary import eval_boundary


class ReferenceFrame:
    """Coefficients of the problem on the fixed rectangle ``[0, 1] x [0, T]``.

    The dilution rate uses ``h'(t) = V(h(t), t)`` evaluated directly rather
    than the derivative of the dense boundary interpolant, so that the
    transformed velocity vanishes identically at ``xi = 1``.
    """

    def __init__(self, spec, traj):
        self.spec = spec
        self.traj = traj

    def h(self, t):
        return eval_boundary(self.traj, t)[0]

    def hp(self, t):
        h = self.h(t)
        return self.spec.V(h, t)

    def h_hp(self, t):
        h = self.h(t)
        return h, self.spec.V(h, t)

    def _x(self, xi, h):
        # RK stages may probe slightly below xi = 0; V is extended constantly there
        return np.clip(np.asarray(xi, float) * h, 0.0, self.spec.L_cap)

    def velocity(self, xi, t):
        """``W(xi, t) = (V(h xi, t) - xi h') / h``, exactly zero at ``xi = 1``."""
        xi = np.asarray(xi, dtype=float)
        h, hp = self.h_hp(t)
        w = (self.spec.V(self._x(xi, h), t) - xi * hp) / h
        return np.where(xi == 1.0, 0.0, w)

    __call__ = velocity

    def vx(self, xi, t):
        """``V_x(h(t) xi, t)``."""
        h = self.h(t)
        return self.spec.V.dx(self._x(xi, h), t)

    def reaction_rate(self, xi, t, P):
        h, hp = self.h_hp(t)
        return self.spec.m(self._x(xi, h), t, P) + hp / h

    def to_physical(self, xi, t):
        return to_physical(self.traj, xi, t)

    def to_reference(self, x, t):
        return to_reference(self.traj, x, t)


def transformed_velocity(spec, traj, xi, t):
    return ReferenceFrame(spec, traj).velocity(xi, t)


def reaction_rate(spec, traj, xi, t, P):
    return ReferenceFrame(spec, traj).reaction_rate(xi, t, P)


def to_physical(traj, xi, t):
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < 0) or np.any(xi > 1):
        raise DomainError(f"reference coordinate {xi!r} outside [0, 1]")
    return eval_boundary(traj, t)[0] * xi


def to_reference(traj, x, t):
    x = np.asarray(x, dtype=float)
    h = eval_boundary(traj, t)[0]
    if np.any(x < 0) or np.any(x > h * (1 + 1e-15)):
        raise DomainError(f"physical size {x!r} outside [0, h(t)={h!r}]")
    return x / h
