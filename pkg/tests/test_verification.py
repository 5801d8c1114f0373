import numpy as np
import pytest

from conftest import benchmark_spec, frame_of, make_spec, random_spec, smooth_benchmark_spec
from sizewave.errors import GridMismatchError, ParameterError
from sizewave.field import Field
from sizewave.monotone import solve_global
from sizewave.verification import (
    TEST_FUNCTIONS,
    compare_on_oracle_grid,
    comparison_check,
    mass_balance_residual,
    physical_mass,
    upwind_oracle,
    weak_residual,
)

XI = np.linspace(0.0, 1.0, 33)
T = np.linspace(0.0, 1.0, 17)


def conservation_spec():
    # u0 vanishes at the inflow corner so that zero inflow is compatible
    return make_spec(u0=(0.0, 0.0, 1.0))


@pytest.fixture(scope="module")
def bench_run():
    frame = frame_of(benchmark_spec())
    field, report = solve_global(frame, n_xi=128, n_t=128, keep_results=True)
    return frame, field, report


# ---------------------------------------------------------------------------- mass balance

def test_mass_balance_zero_field():
    r = mass_balance_residual(Field(XI, T, np.zeros((T.size, XI.size))), make_spec())
    assert np.all(r.values == 0.0)


def test_conservation_case_mass_constant():
    spec = conservation_spec()
    frame = frame_of(spec)
    field, _ = solve_global(frame, n_xi=128, n_t=128)
    mass = physical_mass(field, spec, frame.traj)
    assert np.max(np.abs(mass / mass[0] - 1.0)) <= 1e-6


def test_residual_series_norms():
    r = mass_balance_residual(Field(XI, T, np.ones((T.size, XI.size))), make_spec(C=0.0))
    assert r.t.size == T.size - 2
    assert r.l1 <= r.linf * (r.t[-1] - r.t[0]) + 1e-15


# ---------------------------------------------------------------------------- oracle

def test_oracle_zero_data():
    oracle = upwind_oracle(make_spec(), 32, 64)
    assert np.all(oracle.values == 0.0)


def test_oracle_conserves_mass_to_roundoff():
    spec = conservation_spec()
    oracle = upwind_oracle(spec, 64, 128)
    mass = physical_mass_cells(oracle, spec)
    np.testing.assert_allclose(mass, mass[0], rtol=1e-13)


def physical_mass_cells(field, spec):
    h = np.atleast_1d(frame_of(spec).h(field.t))
    return h * field.values.sum(axis=1) / field.xi.size


def test_oracle_cfl_violation():
    with pytest.raises(ParameterError):
        upwind_oracle(benchmark_spec(), 256, 8)


def test_oracle_close_to_solver(bench_run):
    frame, field, _ = bench_run
    oracle = upwind_oracle(frame.spec, 128, 256, frame.traj)
    assert compare_on_oracle_grid(field, oracle) <= 0.05


def test_compare_needs_shared_rows():
    a = Field(XI, T, np.zeros((T.size, XI.size)))
    b = Field(XI, T + 0.01, np.zeros((T.size, XI.size)))
    with pytest.raises(GridMismatchError):
        compare_on_oracle_grid(a, b)


@pytest.fixture(scope="module")
def smooth_levels():
    spec = smooth_benchmark_spec()
    frame = frame_of(spec)
    out = []
    for n in (32, 64, 128):
        field, _ = solve_global(frame, n_xi=n, n_t=n)
        out.append((n, field))
    return frame, out


def test_oracle_order_on_smooth_benchmark(smooth_levels):
    frame, levels = smooth_levels
    diffs = []
    for n, field in levels:
        oracle = upwind_oracle(frame.spec, n, 2 * n, frame.traj)
        diffs.append(compare_on_oracle_grid(field, oracle))
    orders = np.log2(np.array(diffs[:-1]) / np.array(diffs[1:]))
    assert np.all(orders >= 0.8), (diffs, orders)


def test_mass_balance_order_on_smooth_benchmark(smooth_levels):
    frame, levels = smooth_levels
    norms = [mass_balance_residual(field, frame.spec, frame.traj).linf for _, field in levels]
    orders = np.log2(np.array(norms[:-1]) / np.array(norms[1:]))
    assert np.all(orders >= 0.8), (norms, orders)


# ---------------------------------------------------------------------------- comparison

def test_comparison_examples():
    rng = np.random.default_rng(1)
    up = Field(XI, T, rng.uniform(0, 1, (T.size, XI.size)))
    assert tuple(comparison_check(up, up))[:2] == (True, 0.0)
    assert comparison_check(Field(XI, T, up.values - 1.0), up).ok
    bad = up.values.copy()
    bad[5, 7] += 0.3
    ok, worst, loc = comparison_check(Field(XI, T, bad), up)
    assert not ok
    assert worst == pytest.approx(0.3)
    assert loc == {"t": T[5], "xi": XI[7]}


def test_comparison_tolerance():
    up = Field(XI, T, np.ones((T.size, XI.size)))
    assert comparison_check(Field(XI, T, up.values + 5e-10), up).ok
    assert not comparison_check(Field(XI, T, up.values + 2e-9), up).ok


def test_comparison_grid_mismatch():
    a = Field(XI, T, np.zeros((T.size, XI.size)))
    b = Field(XI[:-1], T, np.zeros((T.size, XI.size - 1)))
    with pytest.raises(GridMismatchError):
        comparison_check(a, b)


def test_comparison_on_random_specs():
    """Every iterate pair of 50 random admissible problems is ordered."""
    rng = np.random.default_rng(20261015)
    failures = []
    for trial in range(50):
        spec, frame = random_spec(rng, n_xi=32)

        def check(slab, state, trial=trial):
            xi = np.linspace(0.0, 1.0, state.lower.shape[1])
            t = np.arange(state.lower.shape[0], dtype=float)
            res = comparison_check(Field(xi, t, state.lower), Field(xi, t, state.upper))
            if not res.ok:
                failures.append((trial, slab, state.k, res.worst_violation))

        solve_global(frame, n_xi=32, n_t=32, callback=check)
    assert failures == []


# ---------------------------------------------------------------------------- weak residual

def test_zero_lower_has_nonnegative_slack():
    spec = benchmark_spec()
    rng = np.random.default_rng(3)
    zero = Field(XI, T, np.zeros((T.size, XI.size)))
    partner = Field(XI, T, rng.uniform(0.0, 2.0, (T.size, XI.size)))
    res = weak_residual(zero, "lower", partner, spec, test_fns={"one": TEST_FUNCTIONS["one"]})
    assert res.min_slack >= 0.0


def test_seeds_are_upper_and_lower(bench_run):
    frame, _, report = bench_run
    for result in report.results:
        p = result.problem
        rows = p.slab_rows
        upper = Field(p.xi, rows, result.seeds.upper(p.xi[None, :], rows[:, None]))
        lower = Field(p.xi, rows, np.zeros_like(upper.values))
        init = p.history.U[p.a]
        assert weak_residual(upper, "upper", lower, frame.spec, frame.traj, initial=init).min_slack >= -1e-8
        assert weak_residual(lower, "lower", upper, frame.spec, frame.traj, initial=init).min_slack >= -1e-8


def test_converged_solution_is_weak_solution(bench_run):
    frame, field, _ = bench_run
    up = weak_residual(field, "upper", field, frame.spec, frame.traj)
    lo = weak_residual(field, "lower", field, frame.spec, frame.traj)
    assert up.max_abs <= 1e-4 and lo.max_abs <= 1e-4
    for name in TEST_FUNCTIONS:
        np.testing.assert_array_equal(up.series[name].values, -lo.series[name].values)


def test_weak_residual_rejects_bad_role():
    f = Field(XI, T, np.zeros((T.size, XI.size)))
    with pytest.raises(ValueError):
        weak_residual(f, "middle", f, benchmark_spec())
