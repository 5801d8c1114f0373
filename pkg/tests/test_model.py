import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import f2, make_spec
from sizewave.conditions import FAIL, estimate_M, validate_conditions
from sizewave.errors import DomainError
from sizewave.model import Field1D, Field2D, MortalityField, eval_field, eval_field_derivative


def test_constant_field_value():
    f = Field2D("constant", (3.5,), (0.0, 2.0), (0.0, 1.0))
    assert eval_field(f, 0.3, 0.7) == 3.5
    assert eval_field(Field1D("constant", (3.5,), (0.0, 1.0)), 0.2) == 3.5


def test_linear_velocity_derivative():
    kappa, L = 0.7, 2.0
    V = Field2D("linear", (kappa * L, -kappa, 0.0), (0.0, L), (0.0, 1.0))
    assert eval_field_derivative(V, 0.4, 0.5) == pytest.approx(-kappa, abs=1e-15)


def test_tabulated_reproduces_nodes():
    nodes = (0.0, 0.3, 0.7, 1.0)
    values = (1.0, 2.5, 0.4, 0.9)
    f = Field1D("tabulated-grid", (), (0.0, 1.0), nodes=nodes, values=values)
    assert np.array_equal(f(np.array(nodes)), np.array(values))
    g = Field2D("tabulated-grid", (), (0.0, 1.0), (0.0, 1.0),
                extra={"x_nodes": [0.0, 0.5, 1.0], "t_nodes": [0.0, 1.0], "values": [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]})
    assert g(0.5, 1.0) == 5.0
    assert g(0.5, 0.5) == pytest.approx(3.5)


def test_out_of_domain_names_field():
    f = Field2D("constant", (1.0,), (0.0, 2.0), (0.0, 1.0), "beta")
    with pytest.raises(DomainError, match="beta"):
        f(2.5, 0.5)
    with pytest.raises(DomainError, match="eta"):
        Field1D("constant", (1.0,), (0.0, 1.0), "eta")(-0.1)


ANALYTIC = [
    Field2D("linear", (1.0, -0.4, 0.2), (0.0, 2.0), (0.0, 1.0)),
    Field2D("polynomial", ((1.0, 0.5), (-0.3, 0.1), (0.05, 0.0)), (0.0, 2.0), (0.0, 1.0)),
    Field2D("exponential", (0.8, -0.6, 0.3, 0.1), (0.0, 2.0), (0.0, 1.0)),
    Field2D("logistic", (2.0, 3.0, 1.0), (0.0, 2.0), (0.0, 1.0)),
    Field2D("separable-product", (), (0.0, 2.0), (0.0, 1.0), extra={
        "x_factor": Field1D("exponential", (1.0, -0.5), (0.0, 2.0)),
        "t_factor": Field1D("linear", (1.0, 0.5), (0.0, 1.0)),
    }),
]


@pytest.mark.parametrize("field", ANALYTIC, ids=lambda f: f.family)
def test_analytic_derivative_matches_finite_difference(field):
    rng = np.random.default_rng(7)
    x = rng.uniform(0.1, 1.9, 32)
    t = rng.uniform(0.0, 1.0, 32)
    step = 1e-5
    fd = (field(x + step, t) - field(x - step, t)) / (2 * step)
    exact = field.dx(x, t)
    assert field.analytic_derivative
    np.testing.assert_allclose(exact, fd, rtol=1e-6, atol=1e-9)


def test_mortality_derivatives():
    L, T = 2.0, 1.0
    rng = np.random.default_rng(3)
    P = rng.uniform(0.0, 3.0, 20)
    x = rng.uniform(0.0, L, 20)
    t = rng.uniform(0.0, T, 20)
    for response, params in (("linear", ()), ("power", (1.5,)), ("saturating", (0.7,)), ("exponential", (0.3,))):
        m = MortalityField(f2("constant", (0.1,), L, T), f2("linear", (0.2, 0.1, 0.0), L, T), response, params)
        fd = (m(x, t, P + 1e-6) - m(x, t, P - 1e-6)) / 2e-6
        np.testing.assert_allclose(m.dP(x, t, P), fd, rtol=1e-6, atol=1e-9)
    callable_m = MortalityField.from_callable(lambda x, t, P: 0.1 + P**2)
    assert callable_m.dP(0.0, 0.0, 1.5) == pytest.approx(3.0, rel=1e-6)


def test_validate_linear_velocity_passes():
    spec = make_spec(mu=0.2, beta=0.3, C=0.4, u0=(0.5,))
    report = validate_conditions(spec, samples=64)
    assert report.ok
    assert report["V_superlinear"].status == "pass"


def test_validate_negative_m_P_fails():
    L, T = 2.0, 1.0
    m = MortalityField(f2("constant", (5.0,), L, T), f2("constant", (-1.0,), L, T), "linear", (), 0.0)
    report = validate_conditions(make_spec(m=m, u0=(0.5,)), samples=64)
    assert report["M_plus_m_P"].status == FAIL
    assert report["M_plus_m_P"].margin == pytest.approx(-1.0)
    assert not report.ok


def test_validate_negative_initial_data_fails():
    report = validate_conditions(make_spec(u0=(-1.0,)), samples=64)
    assert report["u0_nonnegative"].status == FAIL
    assert not report.ok


def test_validate_domain_error_names_field():
    spec = make_spec(beta=Field2D("constant", (0.1,), (0.0, 1.5), (0.0, 1.0), "beta"))
    with pytest.raises(DomainError, match="beta"):
        validate_conditions(spec, samples=16)


def test_validation_fail_persists_under_refinement():
    L, T = 2.0, 1.0
    # m dips below zero only on a narrow band around x = 1.3
    base = Field2D.from_callable(lambda x, t: 0.2 - 0.25 * np.exp(-((x - 1.3) / 0.05) ** 2) + 0 * t,
                                 (0.0, L), (0.0, T), name="m.base")
    spec = make_spec(m=MortalityField(base), u0=(0.3,))
    coarse = validate_conditions(spec, samples=32)
    fine = validate_conditions(spec, samples=64)
    assert coarse["m_nonnegative"].status == FAIL
    assert fine["m_nonnegative"].status == FAIL
    assert fine["m_nonnegative"].margin <= coarse["m_nonnegative"].margin


def test_estimate_M_adds_safety_margin():
    L, T = 2.0, 1.0
    m = MortalityField(f2("constant", (1.0,), L, T), f2("constant", (-0.5,), L, T), "saturating", (1.0,))
    # m_P = -0.5 / (1 + P)^2, worst at P = 0
    assert estimate_M(make_spec(m=m), 2.0) == pytest.approx(1.1 * 0.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(0.0, 1.0))
def test_evaluators_are_pure(x, t):
    f = ANALYTIC[1]
    assert f(x, t) == f(x, t)
    assert f.dx(x, t) == f.dx(x, t)
