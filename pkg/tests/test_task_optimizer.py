import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from taskauto.cost_model import DECISIONS_PER_UNIT, ReducedCostCoefficients, annuity_factors, task_coefficients
from taskauto.entropy_map import AccuracySpec, required_entropy, task_entropy
from taskauto.errors import Infeasible, OutOfRange
from taskauto.scaling_law import ScalingLawParams
from taskauto.task_optimizer import (CostMinimizer, OptimizerConfig, Regime, TaskEconomics, decide_automation,
                                     golden_section, inverse_marginal_cost, marginal_benefit, min_cost_for_target,
                                     total_benefit)

LAW = ScalingLawParams()
PUB = ReducedCostCoefficients.published()


def grid_oracle(cm, h, N=60, rounds=4):
    """Brute-force cheapest design on a zooming log grid."""
    box_lo = np.array([cm.uL, cm.vL, cm.wL])
    box_hi = np.array([cm.uU, cm.vU, cm.wU])
    lo, hi, best, bx = box_lo.copy(), box_hi.copy(), np.inf, None
    for _ in range(rounds):
        U, V, W = np.meshgrid(*[np.linspace(lo[i], hi[i], N) for i in range(3)], indexing="ij")
        B = cm.kD * np.exp(-cm.a * U) + cm.kT * np.exp(-cm.b * V) + cm.kM * np.exp(-cm.c * W) + cm.G
        ok = cm.scale * B <= h
        if cm.ls is not None:
            ok &= V >= U + cm.ls
        C = np.where(ok, cm.cD * np.exp(U) + cm.cT * np.exp(V + W) + cm.q * np.exp(W), np.inf)
        i = np.unravel_index(np.argmin(C), C.shape)
        if C[i] < best:
            best, bx = C[i], np.array([U[i], V[i], W[i]])
        span = (hi - lo) / N * 3
        lo, hi = np.maximum(bx - span, box_lo), np.minimum(bx + span, box_hi)
    return best


def make_task(n_class=10, employees=100.0, wage=60_000.0, required_error=0.05, random_guess_error=0.9,
              judgment_freq=2e5, vision_share=0.6, time_share=0.3, subtasks=1):
    h_task = task_entropy(random_guess_error, n_class)
    h_req = required_entropy(AccuracySpec(1 - required_error, random_guess_error, n_class, subtasks))
    price = 0.432
    return TaskEconomics(wage=wage, employees=employees, time_share=time_share, vision_share=vision_share,
                         subtasks=subtasks, n_class=n_class, h_task=h_task, h_req=h_req,
                         annual_decisions=DECISIONS_PER_UNIT * time_share * vision_share * employees,
                         npv_factor=annuity_factors().plain, p_data=price)


def random_minimizers(seed, count):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = float(np.exp(rng.uniform(math.log(2), math.log(300))))
        coeffs = PUB.scaled(m=int(rng.integers(1, 4)), data_price_ratio=float(np.exp(rng.uniform(-2, 2))))
        cm = CostMinimizer(n, coeffs, float(np.exp(rng.uniform(0, 8))), LAW)
        h = cm.h_min + rng.uniform(0.05, 0.9) * (cm.h_cheap - cm.h_min)
        yield cm, h


def test_total_benefit_example():
    t = replace(make_task(), employees=100, wage=50_000, time_share=0.2, vision_share=0.5, npv_factor=4.546)
    assert total_benefit(t) == pytest.approx(2_273_000, rel=1e-12)
    assert marginal_benefit(t) == pytest.approx(2_273_000 / (t.h_task - t.h_req), rel=1e-12)


def test_task_economics_invariants():
    t = make_task()
    with pytest.raises(OutOfRange):
        replace(t, h_req=t.h_task)
    with pytest.raises(OutOfRange):
        replace(t, time_share=1.5)
    assert t.scaled(10).employees == 10 * t.employees
    assert t.scaled(10).decision_units == pytest.approx(10 * t.decision_units, rel=1e-14)


def test_cost_matches_grid_oracle():
    for cm, h in random_minimizers(0, 10):
        sol = cm.min_cost_for_target(h)
        oracle = grid_oracle(cm, h)
        assert sol.achieved_loss <= h * (1 + 1e-9)
        # the oracle is feasible by construction so it can only be more expensive
        assert sol.variable_cost <= oracle * (1 + 1e-6)
        assert sol.variable_cost == pytest.approx(oracle, rel=0.02)


def test_cost_matches_grid_oracle_with_step_floor():
    cfg = OptimizerConfig(step_floor_per_datum=1000, step_floor_scales_with_n=True)
    rng = np.random.default_rng(1)
    checked = 0
    for _ in range(8):
        n = float(np.exp(rng.uniform(math.log(2), math.log(25))))
        coeffs = PUB.scaled(m=1, data_price_ratio=float(np.exp(rng.uniform(-2, 2))))
        cm = CostMinimizer(n, coeffs, float(np.exp(rng.uniform(0, 8))), LAW, config=cfg)
        if cm.empty:
            continue
        h = cm.h_min + rng.uniform(0.05, 0.9) * (cm.h_cheap - cm.h_min)
        sol = cm.min_cost_for_target(h)
        assert math.log(sol.bundle.steps / sol.bundle.data) >= cm.ls - 1e-9
        assert sol.variable_cost == pytest.approx(grid_oracle(cm, h), rel=0.02)
        checked += 1
    assert checked >= 4


def test_shadow_price_matches_finite_difference():
    for cm, h in random_minimizers(2, 10):
        sol = cm.min_cost_for_target(h)
        assert sol.shadow_price == pytest.approx(sol.shadow_price_fd, rel=0.05)


def test_cost_decreasing_in_target():
    for cm, _ in random_minimizers(3, 5):
        hs = np.linspace(cm.h_min + 0.02 * (cm.h_cheap - cm.h_min), cm.h_cheap, 12)
        costs = [cm.value(h) for h in hs]
        assert all(b <= a * (1 + 1e-9) for a, b in zip(costs, costs[1:]))


def test_unconstrained_above_cheapest_design():
    cm, _ = next(random_minimizers(4, 1))
    sol = cm.solve(cm.h_cheap + 0.1)
    assert sol.shadow_price == 0 and not sol.constraint_active


def test_target_below_reachable_is_infeasible():
    cm, _ = next(random_minimizers(5, 1))
    with pytest.raises(Infeasible):
        cm.solve(cm.h_min - 1e-3)


def test_min_cost_rejects_target_above_baseline():
    t = make_task()
    with pytest.raises(OutOfRange):
        min_cost_for_target(t.h_task + 0.01, t, task_coefficients("reduced", 1, t.p_data))


def test_golden_section_quadratic():
    x, fx = golden_section(lambda z: (z - 0.3) ** 2, 0.0, 1.0, tol=1e-8)
    assert x == pytest.approx(0.3, abs=1e-7) and fx < 1e-13
    x, _ = golden_section(lambda z: z, 0.0, 1.0)
    assert x == 0.0


def test_inverse_marginal_cost_limits():
    t = make_task()
    coeffs = task_coefficients("reduced", 1, t.p_data)
    cm = CostMinimizer(t.n_class, coeffs, t.decision_units, LAW)
    h_small, _ = inverse_marginal_cost(1e-6, t, coeffs)
    h_large, _ = inverse_marginal_cost(1e15, t, coeffs)
    assert h_small == pytest.approx(t.h_task, abs=1e-3)
    assert h_large == pytest.approx(cm.h_min, abs=1e-3)
    with pytest.raises(OutOfRange):
        inverse_marginal_cost(0.0, t, coeffs)


@pytest.mark.parametrize("employees", [100.0, 300.0, 1000.0])
def test_first_order_condition_at_interior_optimum(employees):
    t = make_task(employees=employees)
    coeffs = task_coefficients("reduced", 1, t.p_data)
    cm = CostMinimizer(t.n_class, coeffs, t.decision_units, LAW)
    mb = marginal_benefit(t)
    h_star, sol = inverse_marginal_cost(mb, t, coeffs)
    assert cm.h_min < h_star < t.h_task
    assert sol.shadow_price == pytest.approx(mb, rel=0.05)
    # dual route: the design priced at multiplier mb lands on the same loss
    dual = cm.solve_for_multiplier(mb)
    assert dual.achieved_loss == pytest.approx(h_star, abs=5e-3)
    assert dual.variable_cost == pytest.approx(sol.variable_cost, rel=0.05)


def test_partial_anchor_goes_full_with_scale():
    t = make_task(employees=100.0)
    coeffs = task_coefficients("reduced", 1, t.p_data)
    d = decide_automation(t, coeffs)
    assert d.regime is Regime.PARTIAL
    assert 0 < d.r < 1
    assert d.r == pytest.approx((t.h_task - d.optimal_loss) / (t.h_task - t.h_req), rel=1e-12)
    big = decide_automation(t.scaled(1e4), coeffs)
    assert big.regime is Regime.FULL and big.r == 1.0
    assert big.optimal_loss <= t.h_req + 1e-12


def test_zero_vision_share_is_none():
    t = replace(make_task(), vision_share=0.0)
    d = decide_automation(t, task_coefficients("reduced", 1, t.p_data))
    assert d.regime is Regime.NONE and d.r == 0 and d.variable_cost == 0


def test_fixed_cost_above_benefit_is_none():
    t = make_task(employees=10.0)
    d = decide_automation(t, task_coefficients("reduced", 1, t.p_data))
    assert total_benefit(t) < PUB.c_F
    assert d.regime is Regime.NONE
    assert d.note == "fixed_cost_exceeds_benefit"
    assert not any(d.feasibility_flags.as_dict().values())


def test_step_floor_config():
    cfg = OptimizerConfig(step_floor_per_datum=50.0, step_floor_scales_with_n=True)
    assert cfg.step_floor(10) == 500.0
    assert OptimizerConfig(step_floor_per_datum=50.0).step_floor(10) == 50.0
    t = make_task(employees=1000.0)
    d = decide_automation(t, task_coefficients("reduced", 1, t.p_data), config=cfg)
    if d.solution is not None:
        assert d.solution.bundle.steps >= 500.0 * d.solution.bundle.data * (1 - 1e-9)


@settings(max_examples=25, deadline=None)
@given(st.floats(math.log(2), math.log(200)), st.floats(math.log(20), math.log(1e6)),
       st.floats(0.02, 0.3), st.floats(0.1, 0.9))
def test_decision_flags_consistent(log_n, log_emp, req_frac, vision):
    n = round(math.exp(log_n))
    rge = min(0.9, 1 - 1 / n) if n > 2 else 0.5
    t = make_task(n_class=n, employees=math.exp(log_emp), required_error=req_frac * rge,
                  random_guess_error=rge, vision_share=vision)
    coeffs = task_coefficients("reduced", 1, t.p_data)
    d = decide_automation(t, coeffs)
    f = d.feasibility_flags
    if d.regime is Regime.FULL:
        assert f.full_feasible and f.full_optimal and d.r == 1.0
    elif d.regime is Regime.PARTIAL:
        assert f.partial_feasible and f.partial_optimal and 0 < d.r < 1
    else:
        assert d.r == 0.0
        if total_benefit(t) <= coeffs.c_F:
            assert not any(f.as_dict().values())
    if d.regime is not Regime.NONE:
        assert d.total_benefit * d.r - d.variable_cost - d.fixed_cost > 0
