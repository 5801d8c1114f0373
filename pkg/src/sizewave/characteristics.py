"""Characteristic curves ``dX/dt = W(X, t)`` of the transformed transport equation.

Two layers live here:

* single-curve tools (``trace``, ``crossing_time``, ``dividing_curve``,
  ``exponent_integral``) built on the step-doubling RK4 integrator, and
* ``sweep_backward``, which traces a whole block of grid nodes backward in
  lockstep over the time rows of a solve.  The monotone solver uses it.
"""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from ._ode import hermite, integrate_doubling, rk4_step
from .errors import DegenerateInflowError, NotInflowError

INITIAL_LINE = "initial-line"
INFLOW_BOUNDARY = "inflow-boundary"


def _velocity_fn(velocity):
    """Wrap a frame or a plain ``w(xi, t)`` callable as an ODE right-hand side clamped to ``[0, 1]``."""
    w = velocity.velocity if hasattr(velocity, "velocity") else velocity

    def rhs(t, x):
        x_arr = np.asarray(x, dtype=float)
        out = np.asarray(w(np.minimum(x_arr, 1.0), t), dtype=float)
        out = np.where(x_arr >= 1.0, np.minimum(out, 0.0), out)
        return out if out.ndim else float(out)

    return rhs


@dataclass(frozen=True)
class CharCurve:
    """One characteristic through the anchor ``(xi_hat, t_hat)``.

    ``t`` and ``X`` are integrator nodes ordered from the anchor outward and
    ``W`` the slopes there; ``at`` gives cubic-Hermite dense output.
    ``foot`` is set for backward traces that reached either ``t_start``
    (initial line) or ``xi = 0`` (inflow boundary, at ``crossing``).
    """

    xi_hat: float
    t_hat: float
    t: np.ndarray
    X: np.ndarray
    W: np.ndarray
    foot: str | None = None
    crossing: float | None = None

    def at(self, t):
        if self.t.size == 1:
            return np.full(np.shape(t), self.X[0])
        return np.clip(hermite(self.t, self.X, self.W, t)[0], 0.0, 1.0)

    @property
    def span(self):
        return float(min(self.t[0], self.t[-1])), float(max(self.t[0], self.t[-1]))


def _bisect_step(rhs, t0, x0, t_lo, tol=1e-12):
    """Find ``tau`` in ``[t_lo, t0]`` where one backward RK4 step from ``(t0, x0)`` lands on zero."""
    a, b = t_lo, t0  # the step lands below zero at a, at or above zero at b
    while abs(b - a) > tol:
        mid = 0.5 * (a + b)
        if rk4_step(rhs, t0, x0, mid - t0) < 0.0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def trace(velocity, xi_hat, t_hat, t_target, tol=1e-10, dt_max=None, t_start=0.0):
    """Trace the characteristic through ``(xi_hat, t_hat)`` to ``t_target``.

    A backward trace that reaches ``xi = 0`` ends there; the crossing time
    is located by bisection on the bracketing step.  Paths are confined to
    ``[0, 1]``.
    """
    if not 0.0 <= xi_hat <= 1.0:
        raise ValueError(f"anchor xi={xi_hat!r} outside [0, 1]")
    rhs = _velocity_fn(velocity)
    if dt_max is None:
        dt_max = max(abs(t_target - t_hat) / 64.0, 1e-12)
    backward = t_target < t_hat
    if backward and xi_hat == 0.0:
        return CharCurve(xi_hat, t_hat, np.array([t_hat]), np.array([0.0]),
                         np.array([rhs(t_hat, 0.0)]), INFLOW_BOUNDARY, float(t_hat))
    hit = {}

    def stop(t_prev, x_prev, t_new, x_new):
        if backward and x_new < 0.0:
            hit["bracket"] = (t_prev, x_prev, t_new)
            return True
        return False

    ts, xs = integrate_doubling(rhs, t_hat, xi_hat, t_target, dt_max, tol, atol=tol, stop=stop)
    foot = None
    crossing = None
    if "bracket" in hit:
        t_prev, x_prev, t_new = hit["bracket"]
        crossing = _bisect_step(rhs, t_prev, x_prev, t_new)
        ts[-1], xs[-1] = crossing, 0.0
        foot = INFLOW_BOUNDARY
    elif backward and t_target <= t_start:
        foot = INITIAL_LINE
    xs = np.clip(xs, 0.0, 1.0)
    slopes = np.array([rhs(t, x) for t, x in zip(ts, xs)])
    return CharCurve(float(xi_hat), float(t_hat), ts, xs, slopes, foot, crossing)


def crossing_time(velocity, xi_hat, t_hat, t_start=0.0, tol=1e-10, dt_max=None):
    """Time at which the backward characteristic from ``(xi_hat, t_hat)`` meets ``xi = 0``.

    Raises
    ------
    NotInflowError
        If the curve reaches ``t_start`` while still inside the domain.
    """
    if xi_hat == 0.0:
        return float(t_hat)
    curve = trace(velocity, xi_hat, t_hat, t_start, tol=tol, dt_max=dt_max, t_start=t_start)
    if curve.foot != INFLOW_BOUNDARY:
        raise NotInflowError(
            f"characteristic through ({xi_hat}, {t_hat}) reaches t={t_start} at xi={curve.X[-1]:.6g}"
        )
    return curve.crossing


@dataclass(frozen=True)
class DividingCurve:
    """Samples of ``G(xi)``, the time at which the characteristic from the origin reaches ``xi``.

    Nodes beyond the reach of the traced curve carry ``G = inf``.
    """

    xi: np.ndarray
    G: np.ndarray
    curve: CharCurve

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        finite = np.isfinite(self.G)
        reach = self.xi[finite][-1] if finite.sum() else 0.0
        out = np.full(xi.shape, np.inf)
        inside = xi <= reach
        if finite.sum() >= 2:
            out[inside] = PchipInterpolator(self.xi[finite], self.G[finite])(xi[inside])
        elif finite.sum() == 1:
            out[inside] = self.G[finite][0]
        return out if out.ndim else float(out)

    def classify(self, xi, t):
        """``INFLOW_BOUNDARY`` above the curve, ``INITIAL_LINE`` on or below it."""
        return np.where(np.asarray(t) > self(xi), INFLOW_BOUNDARY, INITIAL_LINE)


def dividing_curve(velocity, xi_grid, t_end, tol=1e-10, dt_max=None):
    rhs = _velocity_fn(velocity)
    if not rhs(0.0, 0.0) > 0.0:
        raise DegenerateInflowError("W(0, 0) <= 0: the characteristic from the origin does not advance")
    curve = trace(velocity, 0.0, 0.0, t_end, tol=tol, dt_max=dt_max)
    xi_grid = np.asarray(xi_grid, dtype=float)
    G = np.full(xi_grid.shape, np.inf)
    x_end = curve.X[-1]
    for i, xi in enumerate(xi_grid):
        if xi == 0.0:
            G[i] = 0.0
        elif xi <= x_end:
            # X is increasing along the curve, so the node bracket is unique
            k = int(np.searchsorted(curve.X, xi))
            j = max(k - 1, 0)
            lo, hi = curve.t[j], curve.t[min(k, curve.t.size - 1)]
            if xi == curve.X[min(k, curve.t.size - 1)]:
                G[i] = hi
            else:
                # a partial RK4 step from the bracketing node is as accurate as the trace itself
                x_lo = curve.X[j]
                G[i] = brentq(lambda s: rk4_step(rhs, lo, x_lo, s - lo) - xi, lo, hi, xtol=1e-14, rtol=1e-15)
    return DividingCurve(xi_grid, G, curve)


def exponent_integral(velocity, curve, extra, panels=None):
    """Integral of ``V_x(h(s) X(s), s) + extra(X(s), s)`` over the curve's time span.

    ``velocity`` should be a :class:`~sizewave.transform.ReferenceFrame`;
    objects without a ``vx`` method contribute ``V_x = 0``.  Composite
    Simpson with ``max(16, 4 * steps)`` panels on the dense output.
    """
    lo, hi = curve.span
    if hi == lo:
        return 0.0
    if panels is None:
        panels = max(16, 4 * (curve.t.size - 1))
    s = np.linspace(lo, hi, 2 * panels + 1)
    x = curve.at(s)
    vals = np.asarray(extra(x, s), dtype=float) + np.zeros(s.shape)
    if hasattr(velocity, "vx"):
        vals = vals + velocity.vx(x, s)
    w = np.ones(s.size)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float((hi - lo) / (6.0 * panels) * (w @ vals))


# ----------------------------------------------------------------------------
# lockstep backward sweep over grid nodes

@dataclass
class FootPanels:
    """Partial first panels ``[tau, s_top]`` of curves that cross ``xi = 0`` inside a row interval."""

    index: np.ndarray
    tau: np.ndarray
    s_mid: np.ndarray
    x_mid: np.ndarray
    s_top: np.ndarray
    x_top: np.ndarray


def _bisect_batch(rhs, t0, x0, t_lo, t_hi, tol=1e-13, max_iter=80):
    """Vectorized :func:`_bisect_step`; ``t0`` equals ``t_hi``.

    Newton steps on the landing time, using ``rhs`` at the landing point as
    the slope, safeguarded by the bracket: any step that leaves it is
    replaced by bisection.
    """
    a = np.array(t_lo, dtype=float)  # step lands below zero
    b = np.array(t_hi, dtype=float)  # step lands at or above zero
    t0 = np.asarray(t0, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    theta = 0.5 * (a + b)
    todo = np.arange(a.size)
    for _ in range(max_iter):
        if todo.size == 0:
            break
        th = theta[todo]
        g = rk4_step(rhs, t0[todo], x0[todo], th - t0[todo])
        neg = g < 0.0
        a[todo] = np.where(neg, th, a[todo])
        b[todo] = np.where(neg, b[todo], th)
        slope = np.asarray(rhs(th, np.maximum(g, 0.0)), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            nxt = th - g / slope
        lo, hi = a[todo], b[todo]
        done = (np.abs(nxt - th) <= tol) | (hi - lo <= tol) | (g == 0.0)
        bad = ~np.isfinite(nxt) | (nxt < lo) | (nxt > hi)
        nxt = np.where(bad, 0.5 * (lo + hi), nxt)
        theta[todo] = np.where(done, np.clip(np.where(bad, th, nxt), lo, hi), nxt)
        todo = todo[~done]
    return theta


def sweep_backward(velocity, rows, head_start, xi, visit):
    """Trace every node ``(xi_i, rows[n])`` with ``n >= head_start`` back to ``rows[0]`` or ``xi = 0``.

    Curves are advanced in lockstep with two RK4 half steps per row
    interval.  Nodes are laid out head-major: node ``(n, i)`` has flat
    index ``(n - head_start) * len(xi) + i``, so the curves alive in
    interval ``j`` are always the suffix starting at
    ``max(j + 1 - head_start, 0) * len(xi)``.

    ``visit(j, start, s, x, panels)`` is called once per interval (from the
    top down) with ``s = (s_lo, s_mid, s_hi)``, ``x = (x_bot, x_mid, x_top)``
    restricted to the suffix (NaN where no full panel exists) and the
    :class:`FootPanels` of curves crossing in that interval.

    Returns ``(x0, tau)``: the foot position on ``rows[0]`` (NaN for
    inflow-footed nodes) and the crossing time (NaN for initial-line feet).
    """
    rhs = _velocity_fn(velocity)
    rows = np.asarray(rows, dtype=float)
    xi = np.asarray(xi, dtype=float)
    n_xi = xi.size
    b = rows.size - 1
    n_nodes = (b - head_start + 1) * n_xi
    X = np.full(n_nodes, np.nan)
    tau = np.full(n_nodes, np.nan)
    for j in range(b - 1, -1, -1):
        start = max(j + 1 - head_start, 0) * n_xi
        if j + 1 >= head_start:
            X[start:start + n_xi] = xi
        s_lo, s_hi = rows[j], rows[j + 1]
        s_mid = 0.5 * (s_lo + s_hi)
        dt = s_lo - s_hi
        x_top = X[start:].copy()
        alive = np.isfinite(x_top)
        x_mid = np.full_like(x_top, np.nan)
        x_bot = np.full_like(x_top, np.nan)
        xa = x_top[alive]
        xm = rk4_step(rhs, s_hi, xa, 0.5 * dt)
        xb = rk4_step(rhs, s_mid, xm, 0.5 * dt)
        # nodes sitting on xi = 0 enter at their own head time
        on_edge = xa == 0.0
        cross_hi = (xm < 0.0) | on_edge
        cross_lo = (~cross_hi) & (xb < 0.0)
        crossed = cross_hi | cross_lo
        x_mid[alive] = np.where(crossed, np.nan, xm)
        x_bot[alive] = np.where(crossed, np.nan, xb)

        alive_idx = np.flatnonzero(alive)
        idx_hi = alive_idx[cross_hi]
        idx_lo = alive_idx[cross_lo]
        t_hi_c = np.full(idx_hi.size, s_hi)
        tau_hi = np.where(
            on_edge[cross_hi],
            s_hi,
            _bisect_batch(rhs, t_hi_c, xa[cross_hi], np.full(idx_hi.size, s_mid), t_hi_c)
            if idx_hi.size else t_hi_c,
        )
        t_mid_c = np.full(idx_lo.size, s_mid)
        tau_lo = (_bisect_batch(rhs, t_mid_c, xm[cross_lo], np.full(idx_lo.size, s_lo), t_mid_c)
                  if idx_lo.size else t_mid_c)
        idx = np.concatenate([idx_hi, idx_lo])
        taus = np.concatenate([tau_hi, tau_lo])
        x_tops = x_top[idx]
        s_fm = 0.5 * (taus + s_hi)
        x_fm = rk4_step(rhs, np.full(idx.size, s_hi), x_tops, s_fm - s_hi) if idx.size else x_tops
        panels = FootPanels(start + idx, taus, s_fm, np.maximum(x_fm, 0.0), np.full(idx.size, s_hi), x_tops)

        visit(j, start, (s_lo, s_mid, s_hi), (x_bot, x_mid, x_top), panels)

        tau[start + idx] = taus
        X[start:] = x_bot
    return X, tau
