"""Classic fourth-order Runge-Kutta stepping shared by the boundary and characteristic solvers."""

import numpy as np

from .errors import StiffnessError


def rk4_step(f, t, y, dt):
    """One classic RK4 step; ``t``, ``y`` and ``dt`` may be arrays of matching shape."""
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_doubling(f, t0, y0, t1, dt_max, rtol, atol=0.0, stop=None, dt_min_rel=1e-13):
    """Integrate the scalar ODE ``y' = f(t, y)`` from ``t0`` to ``t1`` (either direction).

    Step-doubling error control: a full step is compared with two half
    steps, the local error estimate is ``|y_half - y_full| / 15`` and the
    more accurate two-half-step value is kept.  Step sizes only ever halve
    or double (capped at ``dt_max``), so the node set is deterministic.

    ``stop(t_prev, y_prev, t_new, y_new)`` may return True to end the
    integration after an accepted step (used for event bracketing).

    Returns arrays of node times and values.
    """
    direction = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)
    ts = [float(t0)]
    ys = [float(y0)]
    if span == 0.0:
        return np.array(ts), np.array(ys)
    dt = min(dt_max, span)
    t, y = float(t0), float(y0)
    dt_min = dt_min_rel * max(span, 1.0)
    while direction * (t1 - t) > 1e-15 * max(1.0, abs(t1)):
        step = min(dt, abs(t1 - t))
        h = direction * step
        y_full = rk4_step(f, t, y, h)
        y_mid = rk4_step(f, t, y, 0.5 * h)
        y_half = rk4_step(f, t + 0.5 * h, y_mid, 0.5 * h)
        err = abs(y_half - y_full) / 15.0
        if not np.isfinite(y_half):
            err = np.inf
        if err <= atol + rtol * max(1.0, abs(y_half)):
            t_prev, y_prev = t, y
            t = t1 if step == abs(t1 - t) else t + h
            y = float(y_half)
            ts.append(t)
            ys.append(y)
            if stop is not None and stop(t_prev, y_prev, t, y):
                break
            if err <= (atol + rtol * max(1.0, abs(y))) / 32.0:
                dt = min(dt_max, 2.0 * dt)
        else:
            dt = 0.5 * dt
            if dt < dt_min:
                raise StiffnessError(f"step size underflow at t={t!r}")
    return np.array(ts), np.array(ys)


def hermite(t_nodes, y_nodes, dy_nodes, t):
    """Cubic Hermite interpolation; returns ``(y, dy/dt)`` at ``t``.

    Node times are reproduced exactly.
    """
    t = np.asarray(t, dtype=float)
    if t_nodes[-1] < t_nodes[0]:
        t_nodes, y_nodes, dy_nodes = t_nodes[::-1], y_nodes[::-1], dy_nodes[::-1]
    k = np.clip(np.searchsorted(t_nodes, t, side="right") - 1, 0, len(t_nodes) - 2)
    ta, tb = t_nodes[k], t_nodes[k + 1]
    dt = tb - ta
    s = (t - ta) / dt
    s2, s3 = s * s, s * s * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    ya, yb, da, db = y_nodes[k], y_nodes[k + 1], dy_nodes[k], dy_nodes[k + 1]
    y = h00 * ya + h10 * dt * da + h01 * yb + h11 * dt * db
    dy = ((6 * s2 - 6 * s) * ya + (3 * s2 - 4 * s + 1) * dt * da
          + (-6 * s2 + 6 * s) * yb + (3 * s2 - 2 * s) * dt * db) / dt
    return y, dy
