"""Problem definition: coefficient families, the mortality law and ``ProblemSpec``.

Coefficient fields are closed-world families (see ``FAMILIES_1D`` and
``FAMILIES_2D``) so they can be serialized to JSON, plus a ``callable``
escape hatch for library use.  All evaluators are vectorized over numpy
arrays and broadcast ``x`` against ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import DomainError

FAMILIES_1D = ("constant", "linear", "polynomial", "exponential", "logistic", "tabulated-grid")
FAMILIES_2D = FAMILIES_1D + ("separable-product",)
RESPONSES = ("linear", "power", "saturating", "exponential")

# relative slack on domain checks
_DOMAIN_RTOL = 1e-12


def _check_domain(name, values, lo, hi):
    values = np.asarray(values, dtype=float)
    slack = _DOMAIN_RTOL * max(1.0, abs(lo), abs(hi))
    if values.size and (np.any(values < lo - slack) or np.any(values > hi + slack)):
        bad = values[(values < lo - slack) | (values > hi + slack)].ravel()[0]
        raise DomainError(f"{name}: argument {bad!r} outside declared domain [{lo}, {hi}]")
    if values.size and not np.all(np.isfinite(values)):
        raise DomainError(f"{name}: non-finite argument")


def _central_difference(f, y, width):
    step = 1e-6 * max(1.0, width)
    return (f(y + step) - f(y - step)) / (2.0 * step)


# ----------------------------------------------------------------------------
# one-variable fields

def _build_1d(family, params, nodes, values):
    """Return ``(f, df)`` closures for a one-variable family; ``df`` may be None."""
    p = [float(v) for v in params]
    if family == "constant":
        (c,) = p
        return (lambda y: np.full(np.shape(y), c)), (lambda y: np.zeros(np.shape(y)))
    if family == "linear":
        a, b = p
        return (lambda y: a + b * np.asarray(y, dtype=float)), (lambda y: np.full(np.shape(y), b))
    if family == "polynomial":
        coef = np.asarray(p)
        dcoef = np.polynomial.polynomial.polyder(coef) if coef.size > 1 else np.zeros(1)
        return (
            lambda y: np.polynomial.polynomial.polyval(np.asarray(y, dtype=float), coef),
            lambda y: np.polynomial.polynomial.polyval(np.asarray(y, dtype=float), dcoef),
        )
    if family == "exponential":
        a, r, *rest = p
        c = rest[0] if rest else 0.0
        return (
            lambda y: a * np.exp(r * np.asarray(y, dtype=float)) + c,
            lambda y: a * r * np.exp(r * np.asarray(y, dtype=float)),
        )
    if family == "logistic":
        k, r, y0 = p

        def f(y):
            return k / (1.0 + np.exp(-r * (np.asarray(y, dtype=float) - y0)))

        def df(y):
            e = np.exp(-r * (np.asarray(y, dtype=float) - y0))
            return k * r * e / (1.0 + e) ** 2

        return f, df
    if family == "tabulated-grid":
        interp = PchipInterpolator(np.asarray(nodes, float), np.asarray(values, float), extrapolate=True)
        deriv = interp.derivative()
        return (lambda y: interp(np.asarray(y, dtype=float))), (lambda y: deriv(np.asarray(y, dtype=float)))
    raise ValueError(f"unknown 1D family {family!r}")


@dataclass(frozen=True)
class Field1D:
    """A coefficient depending on one variable (size ``y`` or time ``t``).

    ``domain`` is the closed interval on which evaluation is legal.
    """

    family: str
    params: tuple = ()
    domain: tuple = (0.0, 1.0)
    name: str = "field"
    nodes: tuple | None = None
    values: tuple | None = None
    func: Callable | None = field(default=None, compare=False, repr=False)
    dfunc: Callable | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.family == "callable":
            if self.func is None:
                raise ValueError("callable family needs func")
            f, df = self.func, self.dfunc
        else:
            if self.family not in FAMILIES_1D:
                raise ValueError(f"{self.name}: unknown family {self.family!r}")
            f, df = _build_1d(self.family, self.params, self.nodes, self.values)
        object.__setattr__(self, "_f", f)
        object.__setattr__(self, "_df", df)

    @classmethod
    def from_callable(cls, func, domain, dfunc=None, name="field"):
        return cls("callable", (), tuple(domain), name, func=func, dfunc=dfunc)

    @property
    def analytic_derivative(self):
        return self._df is not None

    def __call__(self, y):
        _check_domain(self.name, y, *self.domain)
        return np.asarray(self._f(np.asarray(y, dtype=float)), dtype=float)

    def derivative(self, y):
        _check_domain(self.name, y, *self.domain)
        y = np.asarray(y, dtype=float)
        if self._df is not None:
            return np.asarray(self._df(y), dtype=float)
        return _central_difference(self._f, y, self.domain[1] - self.domain[0])

    def sup_norm(self, samples=1025):
        y = np.linspace(*self.domain, samples)
        return float(np.max(np.abs(self(y))))

    def to_dict(self):
        if self.family == "callable":
            raise ValueError(f"{self.name}: callable fields are not serializable")
        if self.family == "tabulated-grid":
            return {"family": self.family, "nodes": list(self.nodes), "values": list(self.values)}
        return {"family": self.family, "params": list(self.params)}


# ----------------------------------------------------------------------------
# two-variable fields (x, t)

def _build_2d(family, params, spec):
    if family == "constant":
        (c,) = [float(v) for v in params]
        return (
            lambda x, t: np.full(np.broadcast(x, t).shape, c),
            lambda x, t: np.zeros(np.broadcast(x, t).shape),
        )
    if family == "linear":
        a, bx, ct = [float(v) for v in params]
        return (
            lambda x, t: a + bx * np.asarray(x, dtype=float) + ct * np.asarray(t, dtype=float),
            lambda x, t: np.full(np.broadcast(x, t).shape, bx),
        )
    if family == "polynomial":
        # params[j][k] multiplies x**j * t**k
        coef = np.atleast_2d(np.asarray(params, dtype=float))
        dcoef = np.polynomial.polynomial.polyder(coef, axis=0) if coef.shape[0] > 1 else np.zeros((1, coef.shape[1]))
        return (
            lambda x, t: np.polynomial.polynomial.polyval2d(*np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float)), coef),
            lambda x, t: np.polynomial.polynomial.polyval2d(*np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float)), dcoef),
        )
    if family == "exponential":
        a, px, qt, *rest = [float(v) for v in params]
        c = rest[0] if rest else 0.0
        return (
            lambda x, t: a * np.exp(px * np.asarray(x, float) + qt * np.asarray(t, float)) + c,
            lambda x, t: a * px * np.exp(px * np.asarray(x, float) + qt * np.asarray(t, float)),
        )
    if family == "logistic":
        # logistic in x, constant in t
        f1, df1 = _build_1d("logistic", params, None, None)
        return (
            lambda x, t: np.broadcast_to(f1(x), np.broadcast(x, t).shape).astype(float),
            lambda x, t: np.broadcast_to(df1(x), np.broadcast(x, t).shape).astype(float),
        )
    if family == "separable-product":
        fx, ft = spec["x_factor"], spec["t_factor"]
        return (
            lambda x, t: fx._f(np.asarray(x, float)) * ft._f(np.asarray(t, float)),
            (lambda x, t: fx._df(np.asarray(x, float)) * ft._f(np.asarray(t, float))) if fx._df else None,
        )
    if family == "tabulated-grid":
        xs = np.asarray(spec["x_nodes"], float)
        ts = np.asarray(spec["t_nodes"], float)
        table = np.asarray(spec["values"], float)  # shape (len(ts), len(xs))
        slices = [PchipInterpolator(xs, row, extrapolate=True) for row in table]
        dslices = [s.derivative() for s in slices]

        def blend(parts, x, t):
            x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
            if ts.size == 1:
                return parts[0](x)
            j = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, ts.size - 2)
            w = (t - ts[j]) / (ts[j + 1] - ts[j])
            out = np.empty(x.shape)
            for jj in np.unique(j):
                sel = j == jj
                out[sel] = (1 - w[sel]) * parts[jj](x[sel]) + w[sel] * parts[jj + 1](x[sel])
            return out

        return (lambda x, t: blend(slices, x, t)), (lambda x, t: blend(dslices, x, t))
    raise ValueError(f"unknown 2D family {family!r}")


@dataclass(frozen=True)
class Field2D:
    """A coefficient ``f(x, t)`` on ``[0, L_cap] x [0, T]``.

    ``extra`` carries the structured payload of the ``separable-product``
    (``x_factor``, ``t_factor``) and ``tabulated-grid`` (``x_nodes``,
    ``t_nodes``, ``values``) families.
    """

    family: str
    params: tuple = ()
    x_domain: tuple = (0.0, 1.0)
    t_domain: tuple = (0.0, 1.0)
    name: str = "field"
    extra: dict | None = field(default=None, compare=False)
    func: Callable | None = field(default=None, compare=False, repr=False)
    dfunc: Callable | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.family == "callable":
            if self.func is None:
                raise ValueError("callable family needs func")
            f, df = self.func, self.dfunc
        else:
            if self.family not in FAMILIES_2D:
                raise ValueError(f"{self.name}: unknown family {self.family!r}")
            f, df = _build_2d(self.family, self.params, self.extra)
        object.__setattr__(self, "_f", f)
        object.__setattr__(self, "_df", df)

    @classmethod
    def from_callable(cls, func, x_domain, t_domain, dfunc=None, name="field"):
        return cls("callable", (), tuple(x_domain), tuple(t_domain), name, func=func, dfunc=dfunc)

    @property
    def analytic_derivative(self):
        return self._df is not None

    @property
    def depends_on_x(self):
        """False only when the family provably ignores ``x``."""
        if self.family == "constant":
            return False
        if self.family == "linear":
            return float(self.params[1]) != 0.0
        if self.family == "polynomial":
            coef = np.atleast_2d(np.asarray(self.params, dtype=float))
            return bool(np.any(coef[1:] != 0.0))
        if self.family == "exponential":
            return float(self.params[0]) != 0.0 and float(self.params[1]) != 0.0
        if self.family == "separable-product":
            return self.extra["x_factor"].family != "constant"
        return True

    def _check(self, x, t):
        _check_domain(f"{self.name} (x)", x, *self.x_domain)
        _check_domain(f"{self.name} (t)", t, *self.t_domain)

    def __call__(self, x, t):
        self._check(x, t)
        return np.asarray(self._f(np.asarray(x, float), np.asarray(t, float)), dtype=float)

    def dx(self, x, t):
        """Partial derivative in ``x``; central difference when no closed form exists."""
        self._check(x, t)
        x = np.asarray(x, float)
        t = np.asarray(t, float)
        if self._df is not None:
            return np.asarray(self._df(x, t), dtype=float) + np.zeros(np.broadcast(x, t).shape)
        return _central_difference(lambda y: self._f(y, t), x, self.x_domain[1] - self.x_domain[0])

    def to_dict(self):
        if self.family == "callable":
            raise ValueError(f"{self.name}: callable fields are not serializable")
        if self.family == "separable-product":
            return {
                "family": self.family,
                "x_factor": self.extra["x_factor"].to_dict(),
                "t_factor": self.extra["t_factor"].to_dict(),
            }
        if self.family == "tabulated-grid":
            return {"family": self.family, **{k: _listify(v) for k, v in self.extra.items()}}
        return {"family": self.family, "params": _listify(self.params)}


def _listify(v):
    return np.asarray(v, dtype=float).tolist()


# ----------------------------------------------------------------------------
# mortality

def _build_response(family, params):
    p = [float(v) for v in params]
    if family == "linear":
        return (lambda P: np.asarray(P, float)), (lambda P: np.ones(np.shape(P)))
    if family == "power":
        (q,) = p
        return (
            lambda P: np.power(np.maximum(P, 0.0), q),
            lambda P: q * np.power(np.maximum(P, 1e-300), q - 1.0),
        )
    if family == "saturating":
        (k,) = p
        return (lambda P: P / (k + np.asarray(P, float))), (lambda P: k / (k + np.asarray(P, float)) ** 2)
    if family == "exponential":
        (a,) = p
        return (lambda P: np.expm1(a * np.asarray(P, float))), (lambda P: a * np.exp(a * np.asarray(P, float)))
    raise ValueError(f"unknown response family {family!r}")


@dataclass(frozen=True)
class MortalityField:
    """Mortality ``m(x, t, P) = base(x, t) + weight(x, t) * g(P)``.

    ``g`` is one of ``RESPONSES`` and ``M`` is the coupling constant with
    ``M + m_P >= 0`` required on the admissible ``P`` range.  A general
    ``m(x, t, P)`` can be supplied through :meth:`from_callable`; ``m_P``
    then falls back to central differences with step ``1e-6 (1 + |P|)``.
    """

    base: Field2D | None
    weight: Field2D | None = None
    response: str = "linear"
    response_params: tuple = ()
    M: float = 0.0
    func: Callable | None = field(default=None, compare=False, repr=False)
    dfunc: Callable | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.M < 0:
            raise ValueError("coupling constant M must be >= 0")
        if self.func is None:
            g, dg = _build_response(self.response, self.response_params)
            object.__setattr__(self, "_g", g)
            object.__setattr__(self, "_dg", dg)

    @property
    def depends_on_x(self):
        if self.func is not None:
            return True
        return self.base.depends_on_x or (self.weight is not None and self.weight.depends_on_x)

    @classmethod
    def from_callable(cls, func, M=0.0, dfunc=None):
        return cls(None, None, "linear", (), float(M), func=func, dfunc=dfunc)

    def __call__(self, x, t, P):
        if self.func is not None:
            return np.asarray(self.func(x, t, P), dtype=float) + np.zeros(np.broadcast(x, t, P).shape)
        out = self.base(x, t)
        if self.weight is not None:
            out = out + self.weight(x, t) * self._g(np.asarray(P, float))
        return out + np.zeros(np.broadcast(x, t, P).shape)

    def dP(self, x, t, P):
        P = np.asarray(P, float)
        if self.func is not None:
            if self.dfunc is not None:
                return np.asarray(self.dfunc(x, t, P), dtype=float) + np.zeros(np.broadcast(x, t, P).shape)
            step = 1e-6 * (1.0 + np.abs(P))
            return (self.func(x, t, P + step) - self.func(x, t, P - step)) / (2 * step)
        if self.weight is None:
            return np.zeros(np.broadcast(x, t, P).shape)
        return self.weight(x, t) * self._dg(P) + np.zeros(np.broadcast(x, t, P).shape)

    def to_dict(self):
        if self.func is not None:
            raise ValueError("callable mortality is not serializable")
        out = {"base": self.base.to_dict()}
        if self.weight is not None:
            out["weight"] = self.weight.to_dict()
            out["response"] = {"family": self.response, "params": list(self.response_params)}
        return out


# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ProblemSpec:
    """All data of the free boundary problem.

    Attributes
    ----------
    V, beta : Field2D
        Growth and fertility rates on ``[0, L_cap] x [0, T]``.
    m : MortalityField
        Mortality law, carries the coupling constant ``M``.
    eta : Field1D
        Weight of the population measure, on ``[0, L_cap]``.
    C : Field1D
        External inflow of newborns, on ``[0, T]``.
    u0 : Field1D
        Initial density on ``[0, b]``.
    """

    V: Field2D
    m: MortalityField
    beta: Field2D
    eta: Field1D
    C: Field1D
    u0: Field1D
    b: float
    T: float
    L_cap: float

    def __post_init__(self):
        if not (self.b > 0):
            raise ValueError("b must be positive")
        if not (self.T > 0):
            raise ValueError("T must be positive")
        if not (self.L_cap > self.b):
            raise ValueError("L_cap must exceed b")

    @property
    def M(self):
        return self.m.M

    def to_dict(self) -> dict[str, Any]:
        return {
            "V": self.V.to_dict(),
            "m": self.m.to_dict(),
            "beta": self.beta.to_dict(),
            "eta": self.eta.to_dict(),
            "C": self.C.to_dict(),
            "u0": self.u0.to_dict(),
            "b": self.b,
            "T": self.T,
            "M": self.M,
            "L_cap": self.L_cap,
        }


def eval_field(field, *point):
    """Evaluate any coefficient field at ``point`` (``(y,)`` or ``(x, t)``)."""
    return field(*point)


def eval_field_derivative(field, *point):
    """x-derivative (or y-derivative for one-variable fields)."""
    if isinstance(field, Field2D):
        return field.dx(*point)
    return field.derivative(*point)
