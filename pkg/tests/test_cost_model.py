import math

import pytest
from hypothesis import given, settings, strategies as st

from taskauto.cost_model import (DECISIONS_PER_UNIT, CostParams, ReducedCostCoefficients, annuity_factors,
                                 coefficient_report, coefficients_from_params, component_cost, data_cost,
                                 fixed_cost, implied_data_price, inference_cost, p_data, reduced_cost,
                                 reduced_cost_gradient, task_coefficients, training_cost)
from taskauto.errors import MissingWage, OutOfRange, ParseError

P = CostParams()


def geometric(rate, start, stop):
    return sum((1 + rate) ** -t for t in range(start, stop))


def test_annuity_factors():
    af = annuity_factors()
    joint = (1.05) * (1.22) - 1
    assert af.plain == pytest.approx(4.5460, abs=1e-4)
    assert af.plain == pytest.approx(geometric(0.05, 0, 5), rel=1e-14)
    assert af.joint == pytest.approx(geometric(joint, 0, 5), rel=1e-14)
    assert af.plain_from_one == pytest.approx(4.329476670630819, rel=1e-12)
    assert af.joint_from_one == pytest.approx(2.527031687274972, rel=1e-12)
    assert af.joint < af.plain
    assert annuity_factors(CostParams(L=1, d=0.3)).plain == 1.0


def test_fixed_cost():
    assert fixed_cost() == pytest.approx(3_486_090, rel=1e-3)
    assert fixed_cost() == pytest.approx(3486089.5506399083, rel=1e-12)
    assert fixed_cost(CostParams(C_maint=0)) == P.C_impl
    assert fixed_cost(CostParams(C_impl=2 * P.C_impl)) - fixed_cost() == pytest.approx(P.C_impl, rel=1e-12)


def test_data_cost():
    assert data_cost(0, 1, 0.3) == 0
    assert data_cost(1000, 1, 0.3, CostParams(kappa_recur=0)) == pytest.approx(300.0, rel=1e-14)
    assert data_cost(1, 1, 1.0) == pytest.approx(1 + 6 * 4.3295, rel=1e-3)
    assert data_cost(1000, 2, 0.3) == pytest.approx(2 * data_cost(1000, 1, 0.3), rel=1e-14)


def test_training_cost():
    assert training_cost(0, 1e6, 1) == 0
    assert training_cost(1e5, 0, 1) == 0
    assert training_cost(2e5, 1e6, 1) == pytest.approx(2 * training_cost(1e5, 1e6, 1), rel=1e-14)
    per_unit = training_cost(1.0, 1.0, 1)
    assert per_unit == pytest.approx(coefficients_from_params(form="equation").c_T, rel=1e-12)


def test_inference_cost():
    assert inference_cost(1e6, 0, 1) == 0
    base = inference_cost(1e6, 1e9, 1)
    assert inference_cost(2e6, 2e9, 1) == pytest.approx(4 * base, rel=1e-14)


def test_p_data():
    assert p_data(60_000, 0.1, 0.5, 1e6) == 0.05
    assert p_data(60_000, 0.1, 0.5, 1e15) == 0.05
    raw = p_data(60_000, 0.3, 0.6, 2e5, CostParams(Phi=1.0))
    assert p_data(60_000, 0.3, 0.6, 2e5) == pytest.approx(8 * raw, rel=1e-14)
    assert p_data(60_000, 0.3, 0.6, 2e5) == pytest.approx(0.432, rel=1e-14)
    with pytest.raises(MissingWage):
        p_data(None, 0.3, 0.6, 2e5)
    with pytest.raises(MissingWage):
        p_data(float("nan"), 0.3, 0.6, 2e5)


def test_reduced_cost_and_gradient():
    pub = ReducedCostCoefficients.published()
    assert (pub.c_F, pub.c_D, pub.c_T, pub.c_I) == (3_486_090.0, 6.19, 3.83e-6, 1.29e-8)
    assert reduced_cost(0, 0, 0, 0, pub) == 3_486_090.0
    D, T, M, Y = 1e4, 1e5, 1e6, 50.0
    g = reduced_cost_gradient(D, T, M, Y, pub)
    assert g == (pub.c_D, pub.c_T * M, pub.c_T * T + pub.c_I * Y, pub.c_I * M)


@settings(max_examples=100, deadline=None)
@given(st.floats(10, 1e7), st.floats(1e3, 1e7), st.floats(1e4, 1e8), st.floats(0, 1e5), st.integers(1, 4),
       st.floats(0.05, 5))
def test_structural_and_reduced_agree(D, T, M, units, m, price):
    coeffs = coefficients_from_params(P, m, price, form="equation")
    direct = component_cost(D, T, M, units, m, price, P)
    assert reduced_cost(D, T, M, units, coeffs) == pytest.approx(direct, rel=1e-12)


def test_m_scaling():
    one = coefficients_from_params(P, 1, 0.3)
    two = coefficients_from_params(P, 2, 0.3)
    assert two.c_F == one.c_F
    for name in ("c_D", "c_T", "c_I"):
        assert getattr(two, name) == pytest.approx(2 * getattr(one, name), rel=1e-14)


def test_undiscounted_limit():
    p = CostParams(d=0.0, d_GPU=0.0, L=1)
    af = annuity_factors(p)
    assert (af.plain, af.joint, af.plain_from_one, af.joint_from_one) == (1.0, 1.0, 1.0, 1.0)
    assert fixed_cost(p) == p.C_impl + p.C_maint


def test_reduced_mode_uses_published_prices():
    price = implied_data_price()
    c = task_coefficients("reduced", 1, price)
    assert (c.c_F, c.c_T, c.c_I) == (3_486_090.0, 3.83e-6, 1.29e-8)
    assert c.c_D == pytest.approx(6.19, rel=1e-14)
    c2 = task_coefficients("reduced", 2, 2 * price)
    assert c2.c_D == pytest.approx(4 * 6.19, rel=1e-14)


def test_coefficient_report_figures():
    rep = coefficient_report()
    assert rep["c_F_rel_error"] == pytest.approx(-1.289e-7, rel=1e-3)
    assert rep["c_D_per_unit_price_table"] == pytest.approx(1 + 6 * geometric(0.05, 0, 5), rel=1e-12)
    assert rep["p_data_implied"] == pytest.approx(6.19 / (1 + 6 * geometric(0.05, 0, 5)), rel=1e-12)
    # training price per step-parameter; the FLOP rate is per GPU-hour
    flop = 0.34 / (4e12 * 0.4) * 6 * 256 ** 2
    joint = 1.05 * 1.22 - 1
    assert rep["c_T_table"] == pytest.approx(flop * (1000 + 6 * geometric(joint, 0, 5)), rel=1e-12)
    assert rep["c_T_ratio"] == pytest.approx(22.24, rel=1e-3)
    c_I = geometric(joint, 0, 5) * 0.34 / 0.4 * 2000 / 2.01138e13
    assert rep["c_I_per_unit_table"] == pytest.approx(c_I, rel=1e-12)
    assert DECISIONS_PER_UNIT == 3600 * 2000


def test_params_validation_and_parsing(tmp_path):
    with pytest.raises(OutOfRange):
        CostParams(U_GPU=1.5)
    with pytest.raises(OutOfRange):
        CostParams(L=2.5)
    with pytest.raises(ParseError):
        CostParams.from_mapping({"nope": 1})
    path = tmp_path / "cost.kv"
    path.write_text("# costs\nC_impl = 1000000\nL: 3\n", encoding="utf-8")
    p = CostParams.from_file(path)
    assert p.C_impl == 1e6 and p.L == 3 and isinstance(p.L, int)
    path.write_text("C_impl = 1\nC_impl = 2\n", encoding="utf-8")
    with pytest.raises(ParseError, match="line 2"):
        CostParams.from_file(path)
