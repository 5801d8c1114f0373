"""Grid functions on the reference rectangle."""

from dataclasses import dataclass

import numpy as np

from .free_boundary import eval_boundary
from .measures import FieldSlice


@dataclass(frozen=True)
class Field:
    """Density ``u(xi_i, t_n)`` stored as ``values[n, i]``.

    ``traj`` (optional) maps the reference coordinate back to physical size.
    """

    xi: np.ndarray
    t: np.ndarray
    values: np.ndarray
    traj: object = None

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        t = np.asarray(self.t, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.shape != (t.size, xi.size):
            raise ValueError(f"values shape {values.shape} does not match grid ({t.size}, {xi.size})")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape

    def row_index(self, t):
        """Index of the row nearest to ``t``."""
        return int(np.argmin(np.abs(self.t - t)))

    def slice(self, n):
        return FieldSlice(self.xi, self.values[n], float(self.t[n]))

    def physical_x(self, n):
        if self.traj is None:
            raise ValueError("field has no boundary trajectory attached")
        return eval_boundary(self.traj, float(self.t[n]))[0] * self.xi

    def same_grid(self, other):
        return (self.xi.shape == other.xi.shape and self.t.shape == other.t.shape
                and np.array_equal(self.xi, other.xi) and np.array_equal(self.t, other.t))

    def sup_distance(self, other):
        return float(np.max(np.abs(self.values - other.values)))
