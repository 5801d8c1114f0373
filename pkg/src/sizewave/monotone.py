"""Coupled monotone upper/lower iteration solved along characteristics.

Each time slab is solved by iterating the pair of linear transport problems
whose mortality and renewal data are frozen at the previous iterates (the
lower problem takes its mortality from the previous *upper* iterate and the
upper problem from the previous *lower* one).  Every grid node is traced
backward once per slab to its global foot, either on the initial line or on
the inflow boundary ``xi = 0``.  Everything on the curve that does not
change with the iteration (the ``V_x`` term, and the converged mortality of
earlier slabs) is integrated once; only the in-slab mortality is
re-integrated per iteration.

Time interpolation of the measure and renewal series is piecewise linear,
which keeps the discrete iteration map order preserving.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .characteristics import sweep_backward
from .errors import DegenerateInflowError, NonConvergenceError
from .field import Field
from .measures import FieldSlice, RowFunctionals

LN2 = math.log(2.0)
SANDWICH_TOL = 1e-10


# ----------------------------------------------------------------------------
# seeds

@dataclass(frozen=True)
class SeedParams:
    """Constants of the upper seed ``delta * exp(sigma (t - t_a)) * exp(-gamma xi)``."""

    delta: float
    gamma: float
    sigma: float
    T0: float
    t_a: float = 0.0
    span: float = math.inf
    maxima: dict = field(default_factory=dict, compare=False)

    def upper(self, xi, t):
        xi = np.asarray(xi, dtype=float)
        t = np.asarray(t, dtype=float)
        return self.delta * np.exp(self.sigma * (t - self.t_a)) * np.exp(-self.gamma * xi)

    def scaled(self, factor):
        """Seeds with ``delta`` and ``sigma`` multiplied by ``factor`` (still valid for ``factor >= 1``)."""
        sigma = self.sigma * factor
        return SeedParams(self.delta * factor, self.gamma, sigma, min(self.span, LN2 / sigma),
                          self.t_a, self.span, dict(self.maxima))

    def to_dict(self):
        out = asdict(self)
        out["span"] = float(self.span)
        return out


def seed_maxima(frame, slab, samples=128):
    """The sampled maxima entering the seed constants on ``[0, 1] x slab``."""
    spec = frame.spec
    t_a, t_b = slab
    s = np.linspace(t_a, t_b, samples)
    xi = np.linspace(0.0, 1.0, samples)
    h, hp = frame.h_hp(s)
    h = np.atleast_1d(h)
    hp = np.atleast_1d(hp)
    v0 = np.atleast_1d(spec.V(0.0, s))
    if np.any(v0 <= 1e-14):
        raise DegenerateInflowError(f"V(0, t) vanishes on the slab [{t_a}, {t_b}]")
    X = h[:, None] * xi[None, :]
    S = s[:, None]
    beta_ratio = np.max(spec.beta(X, S) * h[:, None] / v0[:, None])
    c_ratio = np.max(spec.C(s) / v0)
    vx_max = np.max(np.abs(spec.V.dx(X, S)))
    W = (spec.V(X, S) - xi[None, :] * hp[:, None]) / h[:, None]
    W[:, -1] = 0.0
    w_max = max(float(np.max(W)), 0.0)
    h_max = float(np.max(h))
    eta_sup = float(np.max(np.abs(spec.eta(np.linspace(0.0, h_max, 4 * samples)))))
    return {
        "beta_ratio": float(beta_ratio),
        "c_ratio": float(c_ratio),
        "vx_max": float(vx_max),
        "w_max": w_max,
        "eta_sup": eta_sup,
        "h_max": h_max,
    }


def seed_bounds(frame, slab, u_sup=None, samples=128, safety=1.05, floor=1e-12):
    """Smallest seed constants (times ``safety``) satisfying the upper-solution inequalities.

    ``gamma >= 2 max beta h / V(0)``, ``delta >= max(|u_init| e^gamma, 2 max C / V(0))``,
    ``sigma >= max|V_x| + gamma max W + 2 delta M |eta| max h`` and
    ``T0 = min(t_b - t_a, ln 2 / sigma)``.
    """
    t_a, t_b = slab
    if u_sup is None:
        u_sup = frame.spec.u0.sup_norm(4097)
    mx = seed_maxima(frame, slab, samples)
    M = frame.spec.M
    gamma = max(safety * 2.0 * mx["beta_ratio"], floor)
    delta = max(safety * max(u_sup * math.exp(gamma), 2.0 * mx["c_ratio"]), floor)
    sigma = max(safety * (mx["vx_max"] + gamma * mx["w_max"] + 2.0 * delta * M * mx["eta_sup"] * mx["h_max"]), floor)
    span = t_b - t_a
    mx["u_sup"] = float(u_sup)
    return SeedParams(delta, gamma, sigma, min(span, LN2 / sigma), float(t_a), float(span), mx)


# ----------------------------------------------------------------------------
# solution history (rows already solved)

class History:
    """Solved rows ``t_0 < ... < t_a`` with their measure and renewal series.

    ``init_fn(xi)`` gives the data on the first row at arbitrary ``xi``;
    backward characteristics that reach ``t_0`` take their foot value
    from it.
    """

    def __init__(self, frame, xi, t_start, init_fn):
        self.frame = frame
        self.xi = np.asarray(xi, dtype=float)
        self.init_fn = init_fn
        row = np.asarray(init_fn(self.xi), dtype=float)
        fun = RowFunctionals(frame, self.xi, [t_start])
        self.t = np.array([float(t_start)])
        self.U = row[None, :]
        self.P = fun.measure(self.U)
        self.R = fun.renewal(self.U)

    @classmethod
    def from_initial_data(cls, frame, xi):
        spec = frame.spec
        return cls(frame, xi, 0.0, lambda z: spec.u0(spec.b * np.clip(z, 0.0, 1.0)))

    @classmethod
    def from_slice(cls, frame, slice_):
        xi = slice_.xi
        values = slice_.values
        return cls(frame, xi, slice_.t, lambda z: np.interp(z, xi, values))

    @property
    def t_end(self):
        return float(self.t[-1])

    def append(self, times, rows, P, R):
        self.t = np.concatenate([self.t, times])
        self.U = np.vstack([self.U, rows])
        self.P = np.concatenate([self.P, P])
        self.R = np.concatenate([self.R, R])


# ----------------------------------------------------------------------------
# slab geometry

@dataclass
class _Interval:
    j: int
    start: int
    valid: np.ndarray
    x: tuple  # (bot, mid, top) restricted to valid
    s: tuple  # (lo, mid, hi)
    h: tuple


class SlabProblem:
    """Characteristic geometry and frozen integrals for one slab ``(t_a, t_b]``."""

    def __init__(self, frame, history, new_rows, threads=1):
        spec = frame.spec
        self.frame = frame
        self.history = history
        self.threads = threads
        self.xi = history.xi
        n_xi = self.xi.size
        self.rows = np.concatenate([history.t, np.asarray(new_rows, dtype=float)])
        self.a = history.t.size - 1
        self.b = self.rows.size - 1
        self.slab_rows = self.rows[self.a:]
        self.n_rows = self.b - self.a
        self.fun = RowFunctionals(frame, self.xi, self.slab_rows)
        self.x_dependent = spec.m.depends_on_x
        n_nodes = self.n_rows * n_xi

        fixed = np.zeros(n_nodes)
        inslab_foot = np.zeros(n_nodes, dtype=bool)
        self.intervals = []
        foot_parts = []
        a = self.a
        hist_t, hist_P = history.t, history.P

        def fixed_integrand(x, s, frozen):
            out = frame.vx(x, s)
            if frozen:
                P = np.interp(s, hist_t, hist_P)
                h = frame.h(s)
                out = out + spec.m(np.clip(h * x, 0.0, spec.L_cap), s, P)
            return out

        def visit(j, start, s, x, panels):
            s_lo, s_mid, s_hi = s
            x_bot, x_mid, x_top = x
            valid = np.flatnonzero(np.isfinite(x_bot))
            xb, xm, xt = x_bot[valid], x_mid[valid], x_top[valid]
            frozen = j < a
            d = s_hi - s_lo
            f = (fixed_integrand(xt, s_hi, frozen) + 4.0 * fixed_integrand(xm, s_mid, frozen)
                 + fixed_integrand(xb, s_lo, frozen))
            fixed[start + valid] += d / 6.0 * f
            if panels.index.size:
                zero = np.zeros(panels.index.size)
                fp = (fixed_integrand(zero, panels.tau, frozen)
                      + 4.0 * fixed_integrand(panels.x_mid, panels.s_mid, frozen)
                      + fixed_integrand(panels.x_top, panels.s_top, frozen))
                fixed[panels.index] += (panels.s_top - panels.tau) / 6.0 * fp
            if not frozen:
                hs = tuple(float(frame.h(v)) for v in (s_lo, s_mid, s_hi))
                self.intervals.append(_Interval(j, start, valid, (xb, xm, xt), (s_lo, s_mid, s_hi), hs))
                if panels.index.size:
                    foot_parts.append(panels)
                    inslab_foot[panels.index] = True

        x0, tau = sweep_backward(frame, self.rows, a + 1, self.xi, visit)

        if foot_parts:
            cat = lambda name: np.concatenate([getattr(p, name) for p in foot_parts])
            self.foot = {name: cat(name) for name in ("index", "tau", "s_mid", "x_mid", "s_top", "x_top")}
        else:
            self.foot = {name: np.zeros(0, dtype=int if name == "index" else float)
                         for name in ("index", "tau", "s_mid", "x_mid", "s_top", "x_top")}
        self.foot["h"] = tuple(np.atleast_1d(frame.h(self.foot[k])) for k in ("tau", "s_mid", "s_top"))

        initial = np.isfinite(x0)
        factor = np.exp(-fixed)
        foot_value = np.ones(n_nodes)
        foot_value[initial] = history.init_fn(x0[initial])
        frozen_inflow = (~initial) & (~inslab_foot)
        foot_value[frozen_inflow] = np.interp(tau[frozen_inflow], history.t, history.R)
        self.fixed_factor = foot_value * factor
        self.inslab_foot = inslab_foot
        self.tau = tau
        self.x0 = x0
        self.fixed_integral = fixed

    # -- per-iteration pieces ------------------------------------------------

    def _m(self, x, h, s, P):
        spec = self.frame.spec
        if not self.x_dependent:
            return np.broadcast_to(spec.m(0.0, s, P), np.shape(x))
        return spec.m(np.clip(h * x, 0.0, spec.L_cap), s, P)

    def mortality_integral(self, P_m, coupling):
        """In-slab integral of ``m(h X, s, P_m(s)) + coupling(s)`` along every node's curve.

        ``P_m`` and ``coupling`` are series on the slab rows, linear in between.
        """
        acc = np.zeros(self.fixed_factor.size)
        a = self.a
        for iv in self.intervals:
            k = iv.j - a
            p_lo, p_hi = P_m[k], P_m[k + 1]
            c_lo, c_hi = coupling[k], coupling[k + 1]
            xb, xm, xt = iv.x
            hb, hm, ht = iv.h
            s_lo, s_mid, s_hi = iv.s
            f = (self._m(xt, ht, s_hi, p_hi) + 4.0 * self._m(xm, hm, s_mid, 0.5 * (p_lo + p_hi))
                 + self._m(xb, hb, s_lo, p_lo))
            f = f + (c_hi + 2.0 * (c_lo + c_hi) + c_lo)
            acc[iv.start + iv.valid] += (s_hi - s_lo) / 6.0 * f
        ft = self.foot
        if ft["index"].size:
            rows = self.slab_rows
            vals = 0.0
            for s_key, x_arr, h_arr, wgt in (("tau", np.zeros(ft["tau"].size), self.foot["h"][0], 1.0),
                                              ("s_mid", ft["x_mid"], self.foot["h"][1], 4.0),
                                              ("s_top", ft["x_top"], self.foot["h"][2], 1.0)):
                s = ft[s_key]
                P = np.interp(s, rows, P_m)
                c = np.interp(s, rows, coupling)
                vals = vals + wgt * (self._m(x_arr, h_arr, s, P) + c)
            acc[ft["index"]] += (ft["s_top"] - ft["tau"]) / 6.0 * vals
        return acc

    def transport(self, P_m, coupling, R_rows):
        """Node values of one linear problem (rows ``a+1 .. b``)."""
        integral = self.mortality_integral(P_m, coupling)
        base = self.fixed_factor.copy()
        sel = self.inslab_foot
        base[sel] *= np.interp(self.tau[sel], self.slab_rows, R_rows)
        return (base * np.exp(-integral)).reshape(self.n_rows, self.xi.size)


# ----------------------------------------------------------------------------
# iteration

@dataclass
class IterationState:
    """Paired iterates on the slab rows ``a .. b`` (row 0 of each array is ``t_a``)."""

    k: int
    lower: np.ndarray
    upper: np.ndarray
    P_lower: np.ndarray
    P_upper: np.ndarray
    R_lower: np.ndarray
    R_upper: np.ndarray
    gap: float
    gaps: list = field(default_factory=list)

    @classmethod
    def from_fields(cls, problem, lower, upper, k=0, gaps=None):
        fun = problem.fun
        gap = float(np.max(upper - lower))
        return cls(k, lower, upper, fun.measure(lower), fun.measure(upper),
                   fun.renewal(lower), fun.renewal(upper), gap, list(gaps or []) + [gap])


def iterate(state, problem):
    """One step of the coupled monotone scheme.

    The new lower iterate uses mortality ``m(P(upper)) + M (P(upper) - P(lower))``
    and renewal from the previous lower iterate; the new upper iterate uses
    ``m(P(lower)) - M (P(upper) - P(lower))`` and renewal from the previous
    upper iterate.
    """
    M = problem.frame.spec.M
    coupling = M * (state.P_upper - state.P_lower)
    jobs = (
        (state.P_upper, coupling, state.R_lower),
        (state.P_lower, -coupling, state.R_upper),
    )
    if problem.threads > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            new_lower, new_upper = pool.map(lambda job: problem.transport(*job), jobs)
    else:
        new_lower, new_upper = (problem.transport(*job) for job in jobs)
    first = problem.history.U[-1]
    lower = np.vstack([first, new_lower])
    upper = np.vstack([first, new_upper])
    return IterationState.from_fields(problem, lower, upper, k=state.k + 1, gaps=state.gaps)


@dataclass
class SlabResult:
    problem: SlabProblem
    state: IterationState
    seeds: SeedParams
    record: dict

    @property
    def solution(self):
        return 0.5 * (self.state.lower + self.state.upper)


def sandwich_violations(prev, new):
    """Largest breaches of ``lo_prev <= lo_new <= up_new <= up_prev`` (positive means violated)."""
    return {
        "lower_increase": float(np.max(prev.lower - new.lower)),
        "upper_decrease": float(np.max(new.upper - prev.upper)),
        "order": float(np.max(new.lower - new.upper)),
    }


def run_slab(problem, seeds, tol=1e-8, k_max=64, callback=None, slab_index=0):
    """Iterate from the seeds ``(0, upper seed)`` until the gap drops to ``tol``."""
    rows = problem.slab_rows
    lower0 = np.zeros((rows.size, problem.xi.size))
    upper0 = seeds.upper(problem.xi[None, :], rows[:, None])
    state = IterationState.from_fields(problem, lower0, upper0)
    worst = {"lower_increase": -math.inf, "upper_decrease": -math.inf, "order": -math.inf}
    history = []
    if callback is not None:
        callback(slab_index, state)
    while True:
        if state.k >= k_max:
            raise NonConvergenceError(
                f"slab {slab_index}: gap {state.gap:.3e} > tol {tol:.1e} after {k_max} iterations",
                state.gaps, slab=slab_index)
        new = iterate(state, problem)
        viol = sandwich_violations(state, new)
        history.append(viol)
        for key, v in viol.items():
            worst[key] = max(worst[key], v)
        state = new
        if callback is not None:
            callback(slab_index, state)
        if state.gap <= tol:
            break
    record = {
        "slab": slab_index,
        "t_a": float(rows[0]),
        "t_b": float(rows[-1]),
        "rows": int(rows.size - 1),
        "iterations": state.k,
        "final_gap": state.gap,
        "gaps": list(state.gaps),
        "seeds": seeds.to_dict(),
        "sandwich_worst": worst,
        "sandwich_ok": all(v <= SANDWICH_TOL for v in worst.values()),
        "gap_monotone": bool(np.all(np.diff(state.gaps) <= SANDWICH_TOL)),
    }
    return SlabResult(problem, state, seeds, record)


def _commit(history, result):
    problem = result.problem
    mid = result.solution[1:]
    fun = RowFunctionals(problem.frame, history.xi, problem.slab_rows[1:])
    history.append(problem.slab_rows[1:], mid, fun.measure(mid), fun.renewal(mid))


# ----------------------------------------------------------------------------
# public drivers

@dataclass
class SolveReport:
    """Summary of a solve; ``slabs`` holds one record per slab."""

    slabs: list = field(default_factory=list)
    wall_time: float = 0.0
    grid: dict = field(default_factory=dict)
    results: list = field(default_factory=list, repr=False)

    @property
    def iterations(self):
        return sum(s["iterations"] for s in self.slabs)

    @property
    def final_gap(self):
        return max((s["final_gap"] for s in self.slabs), default=0.0)

    @property
    def T0_values(self):
        return [s["seeds"]["T0"] for s in self.slabs]

    @property
    def sandwich_ok(self):
        return all(s["sandwich_ok"] for s in self.slabs)

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "final_gap": self.final_gap,
            "T0": self.T0_values,
            "wall_time": self.wall_time,
            "sandwich_ok": self.sandwich_ok,
            "grid": self.grid,
            "slabs": self.slabs,
        }


def solve_slab(frame, slab, u_init=None, n_xi=256, n_t=256, tol=1e-8, k_max=64,
               seeds=None, samples=128, callback=None, threads=1):
    """Solve one slab ``[t_a, t_b]`` on a uniform ``n_xi x n_t`` grid.

    ``u_init`` is the data on ``t = t_a`` as a :class:`FieldSlice`; when
    omitted the initial density ``u0(b xi)`` is used (requires ``t_a = 0``).
    The slab length is not shortened to the seeds' ``T0``; callers that
    need the monotone guarantee should respect ``report.results[0].seeds.T0``.
    """
    t_a, t_b = map(float, slab)
    if u_init is None:
        if t_a != 0.0:
            raise ValueError("u_init is required for slabs that do not start at t = 0")
        history = History.from_initial_data(frame, np.linspace(0.0, 1.0, n_xi + 1))
    else:
        history = History.from_slice(frame, u_init)
    started = time.perf_counter()
    if seeds is None:
        u_sup = max(float(np.max(np.abs(history.U[-1]))),
                    frame.spec.u0.sup_norm(4097) if u_init is None else 0.0)
        seeds = seed_bounds(frame, (t_a, t_b), u_sup, samples)
    problem = SlabProblem(frame, history, np.linspace(t_a, t_b, n_t + 1)[1:], threads)
    result = run_slab(problem, seeds, tol, k_max, callback)
    _commit(history, result)
    report = SolveReport([result.record], time.perf_counter() - started,
                         {"n_xi": int(history.xi.size - 1), "n_t": int(n_t)}, [result])
    return Field(history.xi, history.t, history.U, frame.traj), report


def solve_global(frame, n_xi=256, n_t=256, tol=1e-8, k_max=64, seed_scale=1.0, t0_override=None,
                 samples=128, callback=None, threads=1, keep_results=False):
    """Chain slabs of length ``T0`` over ``[0, T]``.

    Slab ends snap down to the uniform ``n_t`` grid; when ``T0`` is shorter
    than one grid step an extra row is inserted at ``t_a + T0``.  Seeds
    are recomputed for every slab from the sup of the current data over the
    remaining horizon ``[t_a, T]``.  ``seed_scale`` multiplies ``delta`` and
    ``sigma``; ``t0_override`` replaces ``T0`` (test use only, it voids the
    monotonicity guarantee).  With ``keep_results`` the per-slab
    :class:`SlabResult` objects are kept in ``report.results``.
    """
    spec = frame.spec
    T = spec.T
    started = time.perf_counter()
    history = History.from_initial_data(frame, np.linspace(0.0, 1.0, n_xi + 1))
    grid = np.linspace(0.0, T, n_t + 1)
    report = SolveReport(grid={"n_xi": int(n_xi), "n_t": int(n_t)})
    gi = 1
    eps = 1e-12 * max(T, 1.0)
    slab_index = 0
    while history.t_end < T - eps:
        t_a = history.t_end
        u_sup = float(np.max(np.abs(history.U[-1])))
        if slab_index == 0:
            u_sup = max(u_sup, spec.u0.sup_norm(4097))
        seeds = seed_bounds(frame, (t_a, T), u_sup, samples)
        if seed_scale != 1.0:
            seeds = seeds.scaled(seed_scale)
        T0 = seeds.T0 if t0_override is None else min(T - t_a, float(t0_override))
        t_end = t_a + T0
        while gi <= n_t and grid[gi] <= t_a + eps:
            gi += 1
        j = gi
        while j <= n_t and grid[j] <= t_end + eps:
            j += 1
        if j > gi:
            new_rows = grid[gi:j]
            gi = j
        else:
            new_rows = np.array([t_end])
        problem = SlabProblem(frame, history, new_rows, threads)
        result = run_slab(problem, seeds, tol, k_max, callback, slab_index)
        result.record["T0_used"] = float(T0)
        _commit(history, result)
        report.slabs.append(result.record)
        if keep_results:
            report.results.append(result)
        slab_index += 1
    report.wall_time = time.perf_counter() - started
    return Field(history.xi, history.t, history.U, frame.traj), report


def seed_field(seeds, xi, t):
    """The upper seed sampled on a grid, as a :class:`Field`."""
    t = np.asarray(t, dtype=float)
    return Field(xi, t, seeds.upper(np.asarray(xi)[None, :], t[:, None]))


__all__ = [
    "FieldSlice",
    "History",
    "IterationState",
    "SeedParams",
    "SlabProblem",
    "SolveReport",
    "iterate",
    "run_slab",
    "seed_bounds",
    "seed_field",
    "solve_global",
    "solve_slab",
]
