"""Composite quadrature weights on grids.

Weights are returned as explicit vectors (always nonnegative) so that many
slices can be integrated with one matrix product.
"""

import numpy as np


def simpson_weights(n_nodes, dx):
    """Composite Simpson weights for ``n_nodes`` equally spaced nodes.

    An odd number of intervals closes with Simpson's 3/8 rule on the last
    three; a single interval falls back to the trapezoid rule.
    """
    n = n_nodes - 1
    if n < 1:
        raise ValueError("need at least two nodes")
    w = np.zeros(n_nodes)
    if n == 1:
        w[:] = 0.5 * dx
        return w
    if n % 2 == 0:
        m = n
    else:
        m = n - 3
    if m > 0:
        w[0:m + 1:2] += 2.0
        w[1:m:2] += 4.0
        w[0] -= 1.0
        w[m] -= 1.0
        w[: m + 1] *= dx / 3.0
    if m < n:
        w[m:] += np.array([1.0, 3.0, 3.0, 1.0]) * (3.0 * dx / 8.0)
    return w


def trapezoid_weights(x):
    x = np.asarray(x, dtype=float)
    d = np.diff(x)
    w = np.zeros_like(x)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def is_uniform(x, rtol=1e-9):
    d = np.diff(np.asarray(x, dtype=float))
    return d.size > 0 and np.allclose(d, d[0], rtol=rtol, atol=0.0)


def grid_weights(x):
    """Simpson weights on uniform grids, trapezoid weights otherwise."""
    x = np.asarray(x, dtype=float)
    if is_uniform(x):
        return simpson_weights(x.size, (x[-1] - x[0]) / (x.size - 1))
    return trapezoid_weights(x)


def simpson(values, x):
    """Integrate sampled ``values`` (last axis) over nodes ``x``."""
    return np.asarray(values, dtype=float) @ grid_weights(x)
