"""Independent checks of solver output.

* :func:`mass_balance_residual` tests the integrated balance law.
* :func:`upwind_oracle` is a separate first-order finite-volume scheme.
* :func:`comparison_check` tests pointwise ordering of two fields.
* :func:`weak_residual` evaluates the integral inequalities that define upper and lower solutions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import GridMismatchError, ParameterError
from .field import Field
from .free_boundary import solve_boundary
from .measures import RowFunctionals
from .quadrature import grid_weights
from .transform import ReferenceFrame

COMPARISON_TOL = 1e-9


@dataclass(frozen=True)
class ResidualSeries:
    t: np.ndarray
    values: np.ndarray
    name: str = "residual"

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"{self.name}: residual contains non-finite entries")

    @property
    def linf(self):
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    @property
    def l1(self):
        if self.values.size < 2:
            return self.linf
        return float(np.trapezoid(np.abs(self.values), self.t))

    @property
    def min(self):
        return float(np.min(self.values))

    def to_dict(self):
        return {"name": self.name, "linf": self.linf, "l1": self.l1}


def _frame(spec, traj):
    return ReferenceFrame(spec, traj if traj is not None else solve_boundary(spec))


# ----------------------------------------------------------------------------
# mass balance

def mass_balance_residual(field_, spec, traj=None):
    """``d/dt int u dx - [C + int beta u dx - int m(P) u dx]`` at the interior time nodes.

    Physical integrals are ``h`` times the reference-grid quadrature; the
    time derivative is a centered difference on the (possibly nonuniform)
    row times.
    """
    frame = _frame(spec, traj)
    xi, t, U = field_.xi, field_.t, field_.values
    fun = RowFunctionals(frame, xi, t)
    w = grid_weights(xi)
    h = fun.h
    X = h[:, None] * xi[None, :]
    P = fun.measure(U)
    mass = h * (U @ w)
    births = h * ((spec.beta(X, t[:, None]) * U) @ w)
    deaths = h * ((spec.m(X, t[:, None], P[:, None]) * U) @ w)
    source = np.asarray(spec.C(t), dtype=float) + births - deaths
    if t.size < 3:
        return ResidualSeries(t[:0], np.zeros(0), "mass_balance")
    dmass = np.gradient(mass, t)
    r = dmass - source
    return ResidualSeries(t[1:-1], r[1:-1], "mass_balance")


def physical_mass(field_, spec, traj=None):
    frame = _frame(spec, traj)
    h = np.atleast_1d(frame.h(field_.t))
    return h * (field_.values @ grid_weights(field_.xi))


# ----------------------------------------------------------------------------
# finite-volume oracle

def upwind_oracle(spec, n_xi, n_t, traj=None, cfl=0.9):
    """First-order conservative upwind solution on ``n_xi`` cells and ``n_t`` steps.

    The conserved variable is ``q = h u``; one step is

        q_i <- [q_i - dt/dxi * h^n (F_{i+1/2} - F_{i-1/2})] * exp(-dt m_i)

    with upwind fluxes ``F = W u``, inflow flux ``(C + h sum beta u dxi) / h``
    (explicit, using the current cell averages) and no flux at ``xi = 1``.
    The returned field lives at cell centres.
    """
    frame = _frame(spec, traj)
    dxi = 1.0 / n_xi
    centres = (np.arange(n_xi) + 0.5) * dxi
    faces = np.arange(n_xi + 1) * dxi
    t = np.linspace(0.0, spec.T, n_t + 1)
    dt = spec.T / n_t
    h = np.atleast_1d(frame.h(t))
    Wf = frame.velocity(faces[None, :], t[:, None])
    Wf[:, -1] = 0.0
    cfl_number = dt * float(np.max(np.abs(Wf[:, 1:-1]))) / dxi if n_xi > 1 else 0.0
    if cfl_number > cfl:
        raise ParameterError(f"CFL number {cfl_number:.3f} exceeds {cfl}; increase N_t")
    U = np.empty((n_t + 1, n_xi))
    U[0] = spec.u0(spec.b * centres)
    eta_x = lambda n: spec.eta(h[n] * centres)
    for n in range(n_t):
        u = U[n]
        x = h[n] * centres
        P = h[n] * dxi * float(eta_x(n) @ u)
        births = h[n] * dxi * float(spec.beta(x, t[n]) @ u)
        F = np.empty(n_xi + 1)
        F[0] = (float(spec.C(t[n])) + births) / h[n]
        w = Wf[n, 1:-1]
        F[1:-1] = np.where(w >= 0.0, w * u[:-1], w * u[1:])
        F[-1] = 0.0
        q = h[n] * u - dt / dxi * h[n] * (F[1:] - F[:-1])
        q *= np.exp(-dt * spec.m(x, t[n], P))
        U[n + 1] = q / h[n + 1]
    return Field(centres, t, U, frame.traj)


def compare_on_oracle_grid(field_, oracle):
    """Sup difference at the oracle's cell centres and the rows both grids share."""
    rows = []
    for n, tn in enumerate(field_.t):
        k = np.flatnonzero(np.isclose(oracle.t, tn, rtol=0.0, atol=1e-12 * max(1.0, abs(tn))))
        if k.size:
            rows.append((n, int(k[0])))
    if not rows:
        raise GridMismatchError("the fields share no time rows")
    worst = 0.0
    for n, k in rows:
        interp = np.interp(oracle.xi, field_.xi, field_.values[n])
        worst = max(worst, float(np.max(np.abs(interp - oracle.values[k]))))
    return worst


# ----------------------------------------------------------------------------
# ordering

@dataclass(frozen=True)
class ComparisonResult:
    ok: bool
    worst_violation: float
    location: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.ok, self.worst_violation, self.location))


def comparison_check(lower, upper, tol=COMPARISON_TOL):
    """``ok`` iff ``upper - lower >= -tol`` at every node; the worst node is reported either way.

    ``worst_violation`` is ``max(0, max(lower - upper))``.
    """
    if not lower.same_grid(upper):
        raise GridMismatchError("comparison_check needs fields on the same grid")
    diff = lower.values - upper.values
    flat = int(np.argmax(diff))
    n, i = np.unravel_index(flat, diff.shape)
    worst = max(0.0, float(diff.flat[flat]))
    loc = {"t": float(lower.t[n]), "xi": float(lower.xi[i])}
    return ComparisonResult(worst <= tol, worst, loc)


# ----------------------------------------------------------------------------
# weak inequalities

TEST_FUNCTIONS = {
    "one": (lambda xi: np.ones_like(xi), lambda xi: np.zeros_like(xi)),
    "one_minus_xi": (lambda xi: 1.0 - xi, lambda xi: -np.ones_like(xi)),
    "one_minus_xi_squared": (lambda xi: (1.0 - xi) ** 2, lambda xi: -2.0 * (1.0 - xi)),
    "exp_minus_xi": (lambda xi: np.exp(-xi), lambda xi: -np.exp(-xi)),
}


@dataclass(frozen=True)
class WeakResidual:
    """Signed slack per test function; nonnegative slack means the role holds."""

    role: str
    series: dict
    initial_slack: float

    @property
    def min_slack(self):
        return min([s.min for s in self.series.values()] + [self.initial_slack])

    @property
    def max_abs(self):
        return max(s.linf for s in self.series.values())

    def to_dict(self):
        return {"role": self.role, "min_slack": self.min_slack, "initial_slack": self.initial_slack,
                "series": {k: v.to_dict() for k, v in self.series.items()}}


def weak_residual(candidate, role, partner, spec, traj=None, test_fns=None, initial=None):
    """Evaluate the defining integral inequality of an upper or lower solution.

    For each time-independent test function ``phi`` and each row ``t_n``
    the slack is ``lhs - rhs`` (role ``upper``) or ``rhs - lhs`` (role
    ``lower``) where ``lhs = int u(t_n) phi`` and ``rhs`` is the data at the
    first row plus the time integral of the inflow term ``(C/h + int beta
    u) phi(0)``, the transport term ``int W phi_xi u`` and the reaction
    term ``-int (m(P_partner) + M P_partner - M P_u + h'/h) u phi``.

    ``initial`` (default: the candidate's own first row) gives the data
    the first row must dominate (upper) or stay below (lower).
    """
    if role not in ("upper", "lower"):
        raise ValueError("role must be 'upper' or 'lower'")
    if not candidate.same_grid(partner):
        raise GridMismatchError("candidate and partner must share a grid")
    frame = _frame(spec, traj)
    tests = TEST_FUNCTIONS if test_fns is None else test_fns
    xi, t, U = candidate.xi, candidate.t, candidate.values
    fun = RowFunctionals(frame, xi, t)
    w = grid_weights(xi)
    h = fun.h
    hp = np.asarray(spec.V(h, t), dtype=float)
    X = h[:, None] * xi[None, :]
    P_c = fun.measure(U)
    P_p = fun.measure(partner.values)
    W = frame.velocity(xi[None, :], t[:, None])
    reaction = (spec.m(X, t[:, None], P_p[:, None])
                + (spec.M * (P_p - P_c) + hp / h)[:, None])
    inflow = np.asarray(spec.C(t), dtype=float) / h + (spec.beta(X, t[:, None]) * U) @ w
    sign = 1.0 if role == "upper" else -1.0
    series = {}
    for name, (phi_fn, dphi_fn) in tests.items():
        phi = phi_fn(xi)
        dphi = dphi_fn(xi)
        lhs = (U * phi[None, :]) @ w
        rate = inflow * phi[0] + ((W * dphi[None, :] - reaction * phi[None, :]) * U) @ w
        rhs = lhs[0] + cumulative_trapezoid(rate, t, initial=0.0)
        series[name] = ResidualSeries(t, sign * (lhs - rhs), name)
    init = U[0] if initial is None else np.asarray(initial, dtype=float)
    initial_slack = float(np.min(sign * (U[0] - init)))
    return WeakResidual(role, series, initial_slack)
