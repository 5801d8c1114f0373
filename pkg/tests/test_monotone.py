"""Monotone iteration: seeds, single iterates and slab/global drivers.

The closed-form oracles use ``V = kappa (L - x)`` with ``h(t) = L - (L - b) e^{-kappa t}``.
Along a characteristic ``1 - X(s) = (1 - xi) exp(int_s^t kappa L / h)`` and
``V_x = -kappa``, so constant mortality ``mu`` contributes ``exp((kappa - mu)(t - s))``.
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq

from conftest import benchmark_spec, f2, frame_of, h_exact, make_spec
from sizewave.errors import NonConvergenceError
from sizewave.measures import FieldSlice
from sizewave.monotone import (
    History,
    IterationState,
    SlabProblem,
    iterate,
    seed_bounds,
    solve_global,
    solve_slab,
)

KAPPA, L, B = 0.5, 2.0, 1.0


def X_at(xi, t, s):
    rate = quad(lambda r: KAPPA * L / h_exact(r, L, B, KAPPA), s, t, epsabs=1e-14, epsrel=1e-13)[0]
    return 1.0 - (1.0 - xi) * math.exp(rate)


def crossing(xi, t):
    return brentq(lambda s: X_at(xi, t, s), 0.0, t, xtol=1e-15)


def first_state(frame, n_xi=64, n_t=64, t_b=None):
    t_b = frame.spec.T if t_b is None else t_b
    history = History.from_initial_data(frame, np.linspace(0.0, 1.0, n_xi + 1))
    problem = SlabProblem(frame, history, np.linspace(0.0, t_b, n_t + 1)[1:])
    seeds = seed_bounds(frame, (0.0, t_b))
    rows = problem.slab_rows
    upper = seeds.upper(problem.xi[None, :], rows[:, None])
    return problem, seeds, IterationState.from_fields(problem, np.zeros_like(upper), upper)


# ---------------------------------------------------------------------------- seeds

def test_zero_data_floors_delta():
    frame = frame_of(make_spec())
    seeds = seed_bounds(frame, (0.0, 1.0))
    assert seeds.delta == 1e-12
    assert seeds.gamma == 1e-12


def test_delta_formula_without_fertility():
    c0, a0 = 0.2, 0.4
    frame = frame_of(make_spec(C=c0, u0=(a0,)))
    seeds = seed_bounds(frame, (0.0, 1.0))
    v0 = KAPPA * L
    assert c0 / v0 <= 1.0
    expect = 1.05 * max(a0 * math.exp(seeds.gamma), 2.0 * c0 / v0)
    assert seeds.delta == pytest.approx(expect, rel=1e-12)


def test_seed_maxima_match_refined_sampling():
    beta0, mu = 0.3, 0.2
    frame = frame_of(make_spec(beta=beta0, mu=mu, C=0.1, u0=(0.5, 0.0, -0.1)))
    seeds = seed_bounds(frame, (0.0, 1.0))
    # refined maxima from the closed-form boundary, 4x the default sampling
    s = np.linspace(0.0, 1.0, 512)
    xi = np.linspace(0.0, 1.0, 512)
    h = h_exact(s, L, B, KAPPA)
    hp = KAPPA * (L - h)
    v0 = KAPPA * L
    gamma = 1.05 * 2.0 * np.max(beta0 * h / v0)
    W = (KAPPA * (L - h[:, None] * xi[None, :]) - xi[None, :] * hp[:, None]) / h[:, None]
    sigma = 1.05 * (KAPPA + gamma * np.max(W))
    assert seeds.gamma == pytest.approx(gamma, rel=1e-2)
    assert seeds.sigma == pytest.approx(sigma, rel=1e-2)
    assert seeds.maxima["vx_max"] == pytest.approx(KAPPA, rel=1e-2)
    assert seeds.T0 == pytest.approx(min(1.0, math.log(2.0) / sigma), rel=1e-2)


def test_seed_dominates_initial_data():
    frame = frame_of(benchmark_spec())
    seeds = seed_bounds(frame, (0.0, 1.0))
    xi = np.linspace(0.0, 1.0, 1025)
    assert np.all(seeds.upper(xi, 0.0) >= frame.spec.u0(frame.spec.b * xi))


def test_scaled_seeds_shorten_slab():
    frame = frame_of(benchmark_spec())
    seeds = seed_bounds(frame, (0.0, 1.0))
    twice = seeds.scaled(2.0)
    assert twice.delta == 2.0 * seeds.delta and twice.sigma == 2.0 * seeds.sigma
    assert twice.T0 == pytest.approx(min(1.0, math.log(2.0) / twice.sigma))


# ---------------------------------------------------------------------------- iterate

def test_zero_data_first_iterate_is_zero():
    problem, _, state = first_state(frame_of(make_spec()), 32, 32)
    new = iterate(state, problem)
    assert np.all(new.lower == 0.0)


def test_lower_iterate_without_mortality():
    a0, a2 = 0.5, -0.1
    frame = frame_of(make_spec(u0=(a0, 0.0, a2)))
    problem, seeds, state = first_state(frame)
    new = iterate(state, problem)
    # independence from the upper seed
    bigger = IterationState.from_fields(problem, state.lower, 3.0 * state.upper)
    np.testing.assert_array_equal(iterate(bigger, problem).lower, new.lower)
    rows = problem.slab_rows
    for n, i in ((16, 40), (32, 60), (64, 64), (64, 50)):
        t, xi = rows[n], problem.xi[i]
        x0 = X_at(xi, t, 0.0)
        assert x0 >= 0.0
        z = B * x0
        assert new.lower[n, i] == pytest.approx((a0 + a2 * z * z) * math.exp(KAPPA * t), rel=1e-8)


def test_first_iterate_constant_coefficients():
    mu, beta0, c0 = 0.3, 0.2, 0.25
    u0 = (0.6, 0.0, -0.2)
    frame = frame_of(make_spec(mu=mu, beta=beta0, C=c0, u0=u0))
    problem, seeds, state = first_state(frame, 64, 128)
    new = iterate(state, problem)
    v0 = KAPPA * L
    d, g, sg = seeds.delta, seeds.gamma, seeds.sigma

    def Q(tau):  # renewal of the upper seed
        return (c0 + beta0 * h_exact(tau) * d * math.exp(sg * tau) * (1.0 - math.exp(-g)) / g) / v0

    rows = problem.slab_rows
    probes = ((32, 10), (64, 5), (128, 0), (128, 20), (40, 48), (100, 60), (128, 63), (20, 2))
    for n, i in probes:
        t, xi = rows[n], problem.xi[i]
        x0 = X_at(xi, t, 0.0)
        if x0 >= 0.0:
            z = B * x0
            foot_lower = foot_upper = u0[0] + u0[2] * z * z
            s0 = 0.0
        else:
            s0 = crossing(xi, t)
            foot_lower, foot_upper = c0 / v0, Q(s0)
        decay = math.exp((KAPPA - mu) * (t - s0))
        assert new.lower[n, i] == pytest.approx(foot_lower * decay, rel=1e-7)
        assert new.upper[n, i] == pytest.approx(foot_upper * decay, rel=2e-5)


# ---------------------------------------------------------------------------- drivers

def test_zero_data_solve_slab_one_iteration():
    field, report = solve_slab(frame_of(make_spec()), (0.0, 1.0), n_xi=32, n_t=32)
    assert report.iterations == 1
    assert np.all(field.values == 0.0)


def test_uncoupled_case_converges_in_two():
    frame = frame_of(make_spec(mu=0.3, C=0.25, u0=(0.6, 0.0, -0.2)))
    field, report = solve_slab(frame, (0.0, 1.0), n_xi=64, n_t=64)
    assert report.iterations <= 2
    assert report.final_gap <= 1e-8


@pytest.fixture(scope="module")
def bench():
    frame = frame_of(benchmark_spec())
    seeds = seed_bounds(frame, (0.0, 1.0))
    field, report = solve_slab(frame, (0.0, seeds.T0), n_xi=64, n_t=64)
    return frame, field, report


def test_geometric_gap_decay(bench):
    _, _, report = bench
    gaps = np.array(report.slabs[0]["gaps"])
    assert report.final_gap <= 1e-8
    ratios = gaps[2:] / gaps[1:-1]
    assert np.all(ratios < 0.5), ratios


def test_sandwich_and_sign(bench):
    _, field, report = bench
    rec = report.slabs[0]
    assert rec["sandwich_ok"] and rec["gap_monotone"]
    assert np.min(field.values) >= -1e-10


def test_fixed_point(bench):
    frame, field, report = bench
    result = report.results[0]
    mid = result.solution
    state = IterationState.from_fields(result.problem, mid, mid)
    again = iterate(state, result.problem)
    # row 0 is the slab's initial data; history now ends at the slab's last row
    assert np.max(np.abs(again.lower[1:] - mid[1:])) <= 10 * 1e-8
    assert np.max(np.abs(again.upper[1:] - mid[1:])) <= 10 * 1e-8


def test_k_max_exceeded_reports_gaps():
    frame = frame_of(benchmark_spec())
    with pytest.raises(NonConvergenceError) as info:
        solve_slab(frame, (0.0, 0.5), n_xi=32, n_t=32, k_max=1)
    assert len(info.value.gaps) == 2
    assert info.value.gaps[-1] > 1e-8


def test_slab_from_slice_continues(bench):
    frame, field, _ = bench
    start = FieldSlice(field.xi, field.values[-1], float(field.t[-1]))
    cont, report = solve_slab(frame, (float(field.t[-1]), 1.0), u_init=start, n_xi=64, n_t=32)
    assert cont.t[0] == field.t[-1]
    np.testing.assert_array_equal(cont.values[0], field.values[-1])
    assert report.final_gap <= 1e-8


def test_single_slab_global_equals_slab():
    frame = frame_of(make_spec(mu=0.1, weight=0.2, C=0.2, u0=(0.4,)))
    seeds = seed_bounds(frame, (0.0, 1.0))
    assert seeds.T0 == 1.0
    g_field, g_report = solve_global(frame, n_xi=64, n_t=64)
    s_field, _ = solve_slab(frame, (0.0, 1.0), n_xi=64, n_t=64)
    assert len(g_report.slabs) == 1
    np.testing.assert_array_equal(g_field.values, s_field.values)


@pytest.mark.parametrize("t0", [None, 0.3, 0.04])
def test_zero_data_any_slab_count(t0):
    field, report = solve_global(frame_of(make_spec(T=1.0)), n_xi=16, n_t=16, t0_override=t0)
    assert np.all(field.values == 0.0)
    ends = [0.0] + [s["t_b"] for s in report.slabs]
    assert ends[-1] == 1.0
    if t0 is not None:
        assert np.all(np.diff(ends) <= t0 + 1e-12)
        assert len(report.slabs) >= 1.0 / t0


def test_global_slab_joints_on_grid():
    frame = frame_of(make_spec(mu=0.1, weight=0.2, C=0.2, u0=(0.4,)))
    field, report = solve_global(frame, n_xi=32, n_t=40, t0_override=0.3)
    assert len(report.slabs) == 4
    np.testing.assert_allclose(field.t, np.linspace(0.0, 1.0, 41), rtol=0, atol=1e-15)
    assert [s["t_b"] for s in report.slabs] == pytest.approx([0.3, 0.6, 0.9, 1.0])


def test_threads_do_not_change_result():
    frame = frame_of(benchmark_spec())
    one, _ = solve_global(frame, n_xi=32, n_t=32)
    two, _ = solve_global(frame, n_xi=32, n_t=32, threads=2)
    np.testing.assert_array_equal(one.values, two.values)
