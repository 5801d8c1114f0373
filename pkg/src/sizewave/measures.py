"""Nonlocal functionals: the population measure and the renewal boundary value."""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInflowError
from .quadrature import grid_weights


@dataclass(frozen=True)
class FieldSlice:
    """Values of the reference-frame density at one time on nodes ``0 = xi_0 < ... < xi_N = 1``."""

    xi: np.ndarray
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if xi.shape != values.shape:
            raise ValueError("xi and values must have the same shape")
        if xi.size < 9:
            raise ValueError("a slice needs at least 8 intervals")
        if not np.all(np.isfinite(values)):
            raise ValueError("slice values must be finite")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "values", values)

    @property
    def uniform(self):
        d = np.diff(self.xi)
        return bool(np.allclose(d, d[0], rtol=1e-9, atol=0.0))


@dataclass(frozen=True)
class MeasureSeries:
    t: np.ndarray
    P: np.ndarray


def _frame_h(frame, t):
    return float(frame.h(t))


def population_measure(slice_, frame, t=None):
    """``h(t) * int_0^1 eta(h(t) xi) u(xi) dxi``."""
    t = slice_.t if t is None else t
    h = _frame_h(frame, t)
    w = grid_weights(slice_.xi)
    return float(h * (w @ (frame.spec.eta(h * slice_.xi) * slice_.values)))


def renewal_value(slice_, frame, t=None):
    """Inflow density ``[C(t) + h(t) int_0^1 beta(h xi, t) u dxi] / V(0, t)``."""
    t = slice_.t if t is None else t
    spec = frame.spec
    v0 = float(spec.V(0.0, t))
    if v0 <= 1e-14:
        raise DegenerateInflowError(f"V(0, {t}) = {v0!r} leaves the renewal condition without meaning")
    h = _frame_h(frame, t)
    w = grid_weights(slice_.xi)
    births = h * (w @ (spec.beta(h * slice_.xi, t) * slice_.values))
    return float((spec.C(t) + births) / v0)


class RowFunctionals:
    """Precomputed measure and renewal weights for many time rows on one ``xi`` grid.

    ``measure(U)`` and ``renewal(U)`` act on arrays whose last axis is
    ``xi`` and whose leading axis matches ``times``.
    """

    def __init__(self, frame, xi, times):
        spec = frame.spec
        self.xi = np.asarray(xi, dtype=float)
        self.times = np.asarray(times, dtype=float)
        w = grid_weights(self.xi)
        h = np.asarray(frame.h(self.times), dtype=float).reshape(-1)
        x = h[:, None] * self.xi[None, :]
        tt = self.times[:, None]
        v0 = np.asarray(spec.V(0.0, self.times), dtype=float).reshape(-1)
        if np.any(v0 <= 1e-14):
            bad = self.times[v0 <= 1e-14][0]
            raise DegenerateInflowError(f"V(0, {bad}) <= 0 leaves the renewal condition without meaning")
        self.h = h
        self.v0 = v0
        self.c_over_v0 = np.asarray(spec.C(self.times), dtype=float).reshape(-1) / v0
        self.eta_w = h[:, None] * spec.eta(x) * w[None, :]
        self.beta_w = h[:, None] * spec.beta(x, tt) * w[None, :] / v0[:, None]

    def measure(self, U):
        return np.einsum("ij,ij->i", self.eta_w, np.atleast_2d(U))

    def renewal(self, U):
        return self.c_over_v0 + np.einsum("ij,ij->i", self.beta_w, np.atleast_2d(U))
