"""Free boundary ``h'(t) = V(h(t), t)``, ``h(0) = b``."""

from dataclasses import dataclass

import numpy as np

from ._ode import hermite, integrate_doubling
from .errors import CapExceededError, DomainError, SizewaveError


@dataclass(frozen=True)
class BoundaryTrajectory:
    """Nodes of the boundary solve with cubic-Hermite dense output."""

    t: np.ndarray
    h: np.ndarray
    h_prime: np.ndarray

    @property
    def T(self):
        return float(self.t[-1])

    @property
    def b(self):
        return float(self.h[0])

    def __call__(self, t):
        return eval_boundary(self, t)

    def h_at(self, t):
        return eval_boundary(self, t)[0]


def eval_boundary(traj, t):
    """Dense ``(h(t), h'(t))``; exact at node times."""
    t_arr = np.asarray(t, dtype=float)
    span = traj.t[-1]
    if np.any(t_arr < -1e-12 * max(1.0, span)) or np.any(t_arr > span * (1 + 1e-12)):
        raise DomainError(f"boundary evaluated at t={t!r} outside [0, {span}]")
    t_arr = np.clip(t_arr, 0.0, span)
    if traj.t.size == 1:
        return np.full(t_arr.shape, traj.h[0]), np.full(t_arr.shape, traj.h_prime[0])
    h, hp = hermite(traj.t, traj.h, traj.h_prime, t_arr)
    if t_arr.ndim == 0:
        return float(h), float(hp)
    return h, hp


def _check_lipschitz(spec, n=64):
    x = np.linspace(0.0, spec.L_cap, n)
    t = np.linspace(0.0, spec.T, n)
    X, Tg = np.meshgrid(x, t)
    vals = spec.V(X, Tg)
    quotients = np.diff(vals, axis=1) / np.diff(x)
    if not np.all(np.isfinite(quotients)):
        raise SizewaveError("V is not Lipschitz on the sampled box (non-finite difference quotients)")


def solve_boundary(spec, dt_max=None, rtol=1e-8):
    """Integrate the free boundary ODE on ``[0, T]``.

    Parameters
    ----------
    spec : ProblemSpec
    dt_max : float, optional
        Largest step; defaults to ``T / 512``.
    rtol : float
        Local error tolerance of the step-doubling control.

    Raises
    ------
    CapExceededError
        When ``h`` leaves ``(0, L_cap]``; carries the exit time.
    StiffnessError
        On step size underflow.
    """
    if rtol <= 0:
        raise ValueError("rtol must be positive")
    if dt_max is None:
        dt_max = spec.T / 512.0
    _check_lipschitz(spec)

    def rhs(t, h):
        if not (0.0 <= h <= spec.L_cap) or not np.isfinite(h):
            raise CapExceededError(f"free boundary h={h!r} left [0, {spec.L_cap}] near t={t!r}", t)
        return float(spec.V(h, t))

    def stop(t_prev, h_prev, t_new, h_new):
        if not (0.0 < h_new <= spec.L_cap):
            raise CapExceededError(f"free boundary h={h_new!r} left (0, {spec.L_cap}] at t={t_new!r}", t_new)
        return False

    try:
        ts, hs = integrate_doubling(rhs, 0.0, spec.b, spec.T, dt_max, rtol, stop=stop)
    except DomainError as exc:
        raise CapExceededError(f"free boundary left the coefficient domain: {exc}", float("nan")) from exc
    hs[0] = spec.b
    slopes = np.asarray(spec.V(hs, ts), dtype=float)
    return BoundaryTrajectory(ts, hs, slopes)
