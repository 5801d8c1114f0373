"""Sampled checks of the standing assumptions on a problem instance.

All grids are ``linspace(lo, hi, n + 1)``, so the grid at ``2n`` contains
the grid at ``n`` and a violation found at one resolution is found again
at double resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapExceededError, DegenerateInflowError
from .free_boundary import eval_boundary, solve_boundary

PASS, WARNING, FAIL = "pass", "warning", "fail"


@dataclass(frozen=True)
class ConditionResult:
    name: str
    status: str
    margin: float
    point: dict = field(default_factory=dict)
    detail: str = ""

    def to_dict(self):
        return {"name": self.name, "status": self.status, "margin": self.margin,
                "point": self.point, "detail": self.detail}


@dataclass(frozen=True)
class ValidationReport:
    conditions: tuple
    P_bound: float = 0.0

    @property
    def ok(self):
        return all(c.status != FAIL for c in self.conditions)

    def __getitem__(self, name):
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self):
        return [c.name for c in self.conditions if c.status == FAIL]

    def to_dict(self):
        return {"ok": self.ok, "P_bound": self.P_bound,
                "conditions": [c.to_dict() for c in self.conditions]}


def _grid(lo, hi, n):
    return np.linspace(lo, hi, n + 1)


def _judge(name, values, axes, strict, scale=None):
    """Reduce sampled ``values`` to a result; ``axes`` maps axis names to 1-D sample vectors."""
    values = np.asarray(values, dtype=float)
    flat = int(np.argmin(values))
    margin = float(values.flat[flat])
    idx = np.unravel_index(flat, values.shape)
    point = {k: float(v[i]) for (k, v), i in zip(axes.items(), idx)}
    if scale is None:
        scale = max(1.0, float(np.max(np.abs(values))))
    tol = 1e-12 * scale
    if margin < -tol:
        status = FAIL
    elif strict and margin <= tol:
        status = WARNING
    else:
        status = PASS
    return ConditionResult(name, status, margin, point)


def p_bound(spec, traj, samples=128):
    """``|eta|_inf * sup(upper seed) * h(T)``, with the seed sup ``2 delta`` over the first slab."""
    from .monotone import seed_bounds
    from .transform import ReferenceFrame

    frame = ReferenceFrame(spec, traj)
    hT = float(eval_boundary(traj, spec.T)[0])
    h_max = max(hT, float(np.max(traj.h)))
    eta_sup = float(np.max(np.abs(spec.eta(_grid(0.0, h_max, 4 * samples)))))
    try:
        seeds = seed_bounds(frame, (0.0, spec.T), samples=samples)
        u_sup = 2.0 * seeds.delta
    except DegenerateInflowError:
        u_sup = spec.u0.sup_norm(4097)
    return eta_sup * u_sup * hT


def estimate_M(spec, P_max, samples=64, safety=1.1):
    """``safety * max(0, max(-m_P))`` over ``[0, L_cap] x [0, T] x [0, P_max]``."""
    x = _grid(0.0, spec.L_cap, samples)
    t = _grid(0.0, spec.T, samples)
    P = _grid(0.0, P_max, max(samples // 8, 1))
    X, Tg, Pg = np.meshgrid(x, t, P, indexing="ij")
    return safety * max(0.0, float(np.max(-spec.m.dP(X, Tg, Pg))))


def validate_conditions(spec, samples=256, traj=None, P_max=None):
    """Sample every standing assumption and report the worst margin of each.

    Conditions named ``V_positive`` and ``V_superlinear`` are strict
    inequalities (a zero margin is a warning); the rest are ``>= 0``
    checks.  A coefficient declared on a smaller domain than the sampled
    box raises :class:`~sizewave.errors.DomainError` naming the field.
    """
    n = int(samples)
    results = []
    t = _grid(0.0, spec.T, n)

    if traj is None:
        try:
            traj = solve_boundary(spec)
        except CapExceededError as exc:
            results.append(ConditionResult("boundary_within_cap", FAIL, -1.0, {"t": exc.time}, str(exc)))
    if traj is not None:
        h = np.atleast_1d(eval_boundary(traj, t)[0])
        results.append(ConditionResult("boundary_within_cap", PASS,
                                       float(spec.L_cap - np.max(h)), {"t": float(t[np.argmax(h)])}))
        xi = _grid(0.0, 1.0, n)[:-1]
        V_in = spec.V(h[:, None] * xi[None, :], t[:, None])
        results.append(_judge("V_positive", V_in, {"t": t, "xi": xi}, strict=True))
        lam = _grid(0.0, 1.0, n)[1:-1]
        Vh = spec.V(h, t)
        sup = spec.V(h[:, None] * lam[None, :], t[:, None]) - lam[None, :] * Vh[:, None]
        results.append(_judge("V_superlinear", sup, {"t": t, "lambda": lam}, strict=True,
                              scale=max(1.0, float(np.max(np.abs(V_in))))))

    if P_max is None:
        P_max = p_bound(spec, traj, samples=min(n, 128)) if traj is not None else 0.0
    x = _grid(0.0, spec.L_cap, n)
    P = _grid(0.0, P_max, max(n // 8, 1))
    X, Tg, Pg = np.meshgrid(x, t, P, indexing="ij")
    box = {"x": x, "t": t, "P": P}
    results.append(_judge("m_nonnegative", spec.m(X, Tg, Pg), box, strict=False))
    results.append(_judge("M_plus_m_P", spec.M + spec.m.dP(X, Tg, Pg), box, strict=False))

    X2, T2 = np.meshgrid(x, t, indexing="ij")
    results.append(_judge("beta_nonnegative", spec.beta(X2, T2), {"x": x, "t": t}, strict=False))
    results.append(_judge("eta_nonnegative", spec.eta(x), {"x": x}, strict=False))
    results.append(_judge("C_nonnegative", spec.C(t), {"t": t}, strict=False))
    xb = _grid(0.0, spec.b, n)
    results.append(_judge("u0_nonnegative", spec.u0(xb), {"x": xb}, strict=False))
    return ValidationReport(tuple(results), float(P_max))
