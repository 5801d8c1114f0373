"""Shared problem builders for the test suite."""

import math

import numpy as np
import pytest

from sizewave.free_boundary import solve_boundary
from sizewave.model import Field1D, Field2D, MortalityField, ProblemSpec
from sizewave.monotone import seed_bounds
from sizewave.transform import ReferenceFrame


def f2(family, params, L, T, name="f", **extra):
    return Field2D(family, tuple(params), (0.0, L), (0.0, T), name, extra or None)


def make_spec(*, L=2.0, b=1.0, T=1.0, kappa=0.5, V=None, mu=0.0, weight=0.0, response="linear",
              response_params=(), M=0.0, beta=0.0, eta=1.0, C=0.0, u0=(0.0,), m=None, L_cap=None):
    """Constant-coefficient family around ``V = kappa (L - x)``; any piece can be overridden."""
    L_cap = L if L_cap is None else L_cap
    V = f2("linear", (kappa * L, -kappa, 0.0), L_cap, T, "V") if V is None else V
    if m is None:
        base = f2("constant", (mu,), L_cap, T, "m.base")
        w = f2("constant", (weight,), L_cap, T, "m.weight") if weight else None
        m = MortalityField(base, w, response, tuple(response_params), M)
    beta = f2("constant", (beta,), L_cap, T, "beta") if np.isscalar(beta) else beta
    eta = Field1D("constant", (eta,), (0.0, L_cap), "eta") if np.isscalar(eta) else eta
    C = Field1D("constant", (C,), (0.0, T), "C") if np.isscalar(C) else C
    u0 = Field1D("polynomial", tuple(u0), (0.0, b), "u0") if isinstance(u0, tuple) else u0
    return ProblemSpec(V, m, beta, eta, C, u0, b, T, L_cap)


def frame_of(spec, **kw):
    return ReferenceFrame(spec, solve_boundary(spec, **kw))


def h_exact(t, L=2.0, b=1.0, kappa=0.5):
    return L - (L - b) * np.exp(-kappa * np.asarray(t, dtype=float))


def benchmark_spec(L_cap=2.0):
    """Constant coefficients with the corner compatibility ``V(0,0) u0(0) = C(0) + int beta u0``."""
    # u0 = 0.5 - 0.1 x^2 on [0, 1]: int u0 = 0.5 - 0.1 / 3, and V(0, 0) = 1
    c0 = 0.5 - 0.1 * (0.5 - 0.1 / 3.0)
    return make_spec(mu=0.2, weight=0.3, beta=0.1, C=c0, u0=(0.5, 0.0, -0.1), L_cap=L_cap)


def smooth_benchmark_spec():
    """Nonlinear mortality, no fertility, and data vanishing to third order at the corner.

    ``u0 = x^3 (1.5 - x)`` and ``C = 2 t^3`` make the solution ``C^2`` across
    the dividing curve, so first-order schemes converge at full order.
    """
    return make_spec(mu=0.1, weight=0.4, response="saturating", response_params=(1.0,),
                     M=0.0, C=Field1D("polynomial", (0.0, 0.0, 0.0, 2.0), (0.0, 1.0), "C"),
                     u0=(0.0, 0.0, 0.0, 1.5, -1.0))


def random_spec(rng, n_xi=256, max_sigma=30.0):
    """Draw an admissible spec; redraw until the seeds keep at least two grid rows per slab."""
    T = 1.0
    while True:
        L = rng.uniform(1.5, 2.5)
        b = rng.uniform(0.4, 0.8) * L
        k0, k1 = rng.uniform(0.2, 0.6), rng.uniform(0.0, 0.3)
        V = f2("polynomial", [[k0 * L, k1 * L], [-k0, -k1]], L, T, "V")
        mu0 = rng.uniform(0.05, 0.4)
        mux = rng.uniform(0.0, 0.2)
        base = f2("linear", (mu0, mux, 0.0), L, T, "m.base")
        kind = rng.integers(4)
        if kind == 0:
            m = MortalityField(base, f2("constant", (rng.uniform(0.1, 0.5),), L, T), "linear", (), rng.uniform(0.0, 0.5))
        elif kind == 1:
            k = rng.uniform(0.5, 2.0)
            m = MortalityField(base, f2("constant", (rng.uniform(0.1, 0.5),), L, T), "saturating", (k,), 0.0)
        elif kind == 2:
            m = MortalityField(base, f2("constant", (rng.uniform(0.1, 0.3),), L, T), "power", (rng.uniform(1.0, 2.0),),
                               rng.uniform(0.0, 0.3))
        else:
            # decreasing in P: needs M > 0 for M + m_P >= 0
            k = rng.uniform(1.0, 2.0)
            w = -rng.uniform(0.02, min(mu0, 0.3))
            m = MortalityField(base, f2("constant", (w,), L, T), "saturating", (k,), 1.1 * abs(w) / k)
        beta = f2("linear", (rng.uniform(0.0, 0.15), rng.uniform(0.0, 0.05), 0.0), L, T, "beta")
        if rng.integers(2):
            eta = Field1D("constant", (1.0,), (0.0, L), "eta")
        else:
            eta = Field1D("exponential", (1.0, -rng.uniform(0.1, 1.0)), (0.0, L), "eta")
        C = Field1D("linear", (rng.uniform(0.0, 0.5), rng.uniform(0.0, 0.2)), (0.0, T), "C")
        a0 = rng.uniform(0.0, 1.0)
        r = rng.uniform(0.0, 0.9)
        u0 = Field1D("polynomial", (a0, 0.0, -a0 * r / b**2), (0.0, b), "u0")
        spec = ProblemSpec(V, m, beta, eta, C, u0, b, T, L)
        frame = frame_of(spec)
        seeds = seed_bounds(frame, (0.0, T))
        if 2.0 * seeds.sigma <= max_sigma and math.log(2.0) / (2.0 * seeds.sigma) >= 2.0 * T / n_xi:
            return spec, frame


@pytest.fixture
def bench_frame():
    return frame_of(benchmark_spec())
