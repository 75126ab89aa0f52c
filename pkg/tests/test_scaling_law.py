import math
from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from taskauto.errors import DegenerateDesign, ExtrapolationWarning, FitFailed, NonPositiveBracket, OutOfRegime
from taskauto.scaling_law import (DEFAULT_REGIME, InputBundle, ScalingLawParams, ScalingLawRegressor,
                                  allen_uzawa_elasticities, design_grid, eval_loss, eval_loss_array,
                                  fit_scaling_law, generate_synthetic_observations, log_gradient, loss_gradient,
                                  observations_to_arrays, performance_elasticities, read_observations,
                                  substitution_elasticities, write_observations)

LAW = ScalingLawParams()

# published constants, written out independently of the package defaults
TABLE = dict(A0="-1.448", A1="0.752", a0="-0.034", a1="0.077", B0="1.474", B1="1.049", b0="0.383",
             b1="0.020", C0="4.054", C1="0.308", c0="0.614", c1="-0.041", G="-0.296", K="-0.150")


def decimal_loss(n, D, T, M, per_class=True):
    """Loss in 50-digit decimal arithmetic."""
    getcontext().prec = 50
    p = {k: Decimal(v) for k, v in TABLE.items()}
    n, D, T, M = (Decimal(repr(float(v))) for v in (n, D, T, M))
    L = n.ln()
    x = D / n if per_class else D
    alpha = (p["A0"] + p["A1"] * L).exp()
    beta = (p["B0"] + p["B1"] * L).exp()
    sigma = (p["C0"] + p["C1"] * L).exp()
    a, b, c = p["a0"] + p["a1"] * L, p["b0"] + p["b1"] * L, p["c0"] + p["c1"] * L
    bracket = alpha * (-a * x.ln()).exp() + beta * (-b * T.ln()).exp() + sigma * (-c * M.ln()).exp() + p["G"]
    return float(bracket * (p["K"] * L).exp())


regime_points = st.tuples(
    st.floats(math.log(2), math.log(5000)),
    st.floats(math.log(13), math.log(1300)),
    st.floats(math.log(1e3), math.log(1e7)),
    st.floats(math.log(7.3e3), math.log(8.78e7)),
).map(lambda t: InputBundle(math.exp(t[0] + t[1]), math.exp(t[2]), math.exp(t[3]), math.exp(t[0])))


def test_defaults_match_published_table():
    assert LAW.to_dict() == {k: float(v) for k, v in TABLE.items()}


@pytest.mark.parametrize("n,D,T,M", [(2, 26, 2e5, 2.5e5), (10, 1300, 1e5, 4e5), (100, 1e5, 1e6, 2.83e7),
                                     (500, 650_000, 1e7, 8.78e7)])
def test_eval_loss_matches_high_precision(n, D, T, M):
    assert eval_loss(InputBundle(D, T, M, n)) == pytest.approx(decimal_loss(n, D, T, M), rel=1e-9)


def test_eval_loss_frozen_values():
    assert eval_loss(InputBundle(1300, 1e5, 4e5, 10)) == pytest.approx(0.6079156851468599, rel=1e-12)
    assert eval_loss(InputBundle(26, 1e3, 7.3e3, 2)) == pytest.approx(0.9492013285007651, rel=1e-12)


def test_total_data_term():
    b = InputBundle(25_000, 2e5, 2.5e5, 10)
    assert eval_loss(b, data_term="total", mode="extrapolate") == pytest.approx(
        decimal_loss(10, 25_000, 2e5, 2.5e5, per_class=False), rel=1e-9)


def test_upper_bounds_beat_lower_bounds():
    lo = InputBundle(26, 1e3, 7.3e3, 2)
    hi = InputBundle(2600, 1e7, 8.78e7, 2)
    assert eval_loss(hi) < eval_loss(lo)


def test_doubling_data_lowers_loss():
    b = InputBundle(1000, 1e5, 1e6, 10)
    assert eval_loss(InputBundle(2000, 1e5, 1e6, 10)) < eval_loss(b)


def test_strict_mode_rejects_out_of_regime():
    with pytest.raises(OutOfRegime):
        eval_loss(InputBundle(25_000, 2e5, 2.5e5, 2))
    assert eval_loss(InputBundle(25_000, 2e5, 2.5e5, 2), mode="extrapolate") > 0


def test_non_positive_bracket_and_clamp():
    huge = InputBundle(1e14, 1e14, 1e14, 2)
    with pytest.raises(NonPositiveBracket):
        eval_loss(huge, mode="extrapolate")
    with pytest.warns(ExtrapolationWarning):
        v = eval_loss(huge, mode="clamp")
    assert v == pytest.approx(1e-9 * 2 ** LAW.K)


def test_bracket_positive_on_regime_corner():
    # the bracket is smallest at the upper bounds of (D/n, T, M) for every n
    n = np.geomspace(2, 5000, 2000)
    h = eval_loss_array(LAW, n, 1300 * n, 1e7, 8.78e7)
    assert np.all(h > 0)


def test_exponents_positive_on_regime():
    n = np.geomspace(2, 5000, 500)
    for e in LAW.exponents(n):
        assert np.all(e > 0)


@settings(max_examples=200, deadline=None)
@given(regime_points, st.floats(1.01, 3.0), st.integers(0, 2))
def test_monotone_along_each_axis(b, factor, axis):
    x = [b.data, b.steps, b.model_size]
    upper = [b.n_class * 1300, 1e7, 8.78e7]
    x2 = list(x)
    x2[axis] = min(x[axis] * factor, upper[axis])
    if x2[axis] <= x[axis] * (1 + 1e-9):
        return
    b2 = InputBundle(x2[0], x2[1], x2[2], b.n_class)
    assert eval_loss(b2) < eval_loss(b)


@settings(max_examples=200, deadline=None)
@given(regime_points)
def test_gradient_matches_central_differences(b):
    g = loss_gradient(b)
    x = np.array([b.data, b.steps, b.model_size])
    for i in range(3):
        h = 1e-5 * x[i]
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        fp = eval_loss(InputBundle(*xp, b.n_class), mode="extrapolate")
        fm = eval_loss(InputBundle(*xm, b.n_class), mode="extrapolate")
        assert g[i] == pytest.approx((fp - fm) / (2 * h), rel=1e-5)
        assert g[i] < 0


def test_gradient_shrinks_with_more_data():
    mid = InputBundle(10 * math.sqrt(13 * 1300), 1e5, 1e6, 10)
    far = InputBundle(mid.data * 10, 1e5, 1e6, 10)
    assert abs(loss_gradient(far)[0]) < abs(loss_gradient(mid)[0])


def test_array_and_scalar_agree():
    design = design_grid()
    X, _ = observations_to_arrays(generate_synthetic_observations(LAW, design, noise_sd=0))
    arr = eval_loss_array(LAW, X[:, 0], X[:, 1], X[:, 2], X[:, 3])
    assert np.allclose(arr, [eval_loss(b) for b in design], rtol=1e-14)


# -- synthetic data


def test_design_grid_shape():
    design = design_grid()
    assert len(design) == 80
    X = np.array([[b.n_class, b.data / b.n_class, b.steps, b.model_size] for b in design])
    assert [np.unique(X[:, j]).size for j in range(4)] == [4, 5, 4, 4]
    assert all(DEFAULT_REGIME.contains(b.n_class, b.data, b.steps, b.model_size) for b in design)


def test_synthetic_observations_contract():
    design = design_grid()
    obs = generate_synthetic_observations(LAW, design, noise_sd=0.01, replicates=50, seed=3)
    assert len(obs) == 4000
    again = generate_synthetic_observations(LAW, design, noise_sd=0.01, replicates=50, seed=3)
    assert [o.loss for o in obs] == [o.loss for o in again]
    clean = generate_synthetic_observations(LAW, design, noise_sd=0.0)
    assert [o.loss for o in clean] == [eval_loss(b) for b in design]


def test_observation_csv_round_trip(tmp_path):
    obs = generate_synthetic_observations(LAW, design_grid()[:10], noise_sd=0.01, seed=1)
    write_observations(tmp_path / "obs.csv", obs)
    back = read_observations(tmp_path / "obs.csv")
    assert [o.loss for o in back] == pytest.approx([o.loss for o in obs], rel=1e-9)


# -- fitting


@pytest.fixture(scope="module")
def noiseless_fit():
    obs = generate_synthetic_observations(LAW, design_grid(), noise_sd=0.0, replicates=1)
    return fit_scaling_law(obs, restarts=8, split_seed=0)


def test_noiseless_fit_recovers_law(noiseless_fit):
    params, train_r2, test_r2 = noiseless_fit
    assert test_r2 >= 0.999
    assert train_r2 >= 0.999
    b = InputBundle(500, 1e5, 1e6, 10)
    assert eval_loss(b, params) == pytest.approx(eval_loss(b), rel=1e-3)


def test_fit_is_deterministic():
    obs = generate_synthetic_observations(LAW, design_grid(), noise_sd=0.01, replicates=2, seed=0)
    a = fit_scaling_law(obs, restarts=2, split_seed=1)
    b = fit_scaling_law(obs, restarts=2, split_seed=1)
    assert np.array_equal(a.params.to_array(), b.params.to_array())


def test_degenerate_design_rejected():
    design = [b for b in design_grid() if b.data / b.n_class == 130.0]
    obs = generate_synthetic_observations(LAW, design, noise_sd=0.01, replicates=3)
    with pytest.raises(DegenerateDesign):
        fit_scaling_law(obs, restarts=1)


def test_fit_failed_when_no_restart_converges():
    obs = generate_synthetic_observations(LAW, design_grid(), noise_sd=0.01)
    with pytest.raises(FitFailed):
        fit_scaling_law(obs, restarts=2, max_nfev=1)


def test_regressor_api(noiseless_fit):
    obs = generate_synthetic_observations(LAW, design_grid(), noise_sd=0.0)
    X, y = observations_to_arrays(obs)
    reg = ScalingLawRegressor(restarts=3)
    assert clone(reg).get_params()["restarts"] == 3
    reg.params_ = noiseless_fit.params
    assert reg.score(X, y) >= 0.999
    assert reg.predict(X[:2]).shape == (2,)


# -- elasticities

SMALL = InputBundle(25_000, 2e5, 2.5e5, 2)


def test_two_class_small_bundle_elasticities():
    eps = performance_elasticities(SMALL, data_term="total")
    for got, ref in zip((*eps, sum(eps)), (0.010, 0.046, 0.046, 0.102)):
        assert got == pytest.approx(ref, rel=0.2)


@pytest.mark.parametrize("data_term", ["per_class", "total"])
def test_elasticities_are_log_derivatives(data_term):
    b = InputBundle(5000, 2e5, 1e6, 10)
    h_task = math.log(10)
    eps = performance_elasticities(b, h_task=h_task, data_term=data_term)
    x = np.array([b.data, b.steps, b.model_size])
    for i in range(3):
        step = 1e-4
        xp, xm = x.copy(), x.copy()
        xp[i] *= math.exp(step)
        xm[i] *= math.exp(-step)
        fp = math.log(h_task - eval_loss(InputBundle(*xp, 10), mode="extrapolate", data_term=data_term))
        fm = math.log(h_task - eval_loss(InputBundle(*xm, 10), mode="extrapolate", data_term=data_term))
        assert eps[i] == pytest.approx((fp - fm) / (2 * step), rel=1e-4)


def test_log_gradient_scales_gradient():
    b = InputBundle(5000, 2e5, 1e6, 10)
    assert np.allclose(log_gradient(b), np.array(loss_gradient(b)) * [b.data, b.steps, b.model_size])


def test_substitution_equal_exponents():
    # a(n) = b(n) where a0 + a1 ln n = b0 + b1 ln n
    n = math.exp((LAW.b0 - LAW.a0) / (LAW.a1 - LAW.b1))
    b = InputBundle(100 * n, 1e5, 1e6, n)
    a = LAW.exponents(n)[0]
    s_dt, _, _ = substitution_elasticities(b)
    assert s_dt == pytest.approx(a + 1, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(regime_points)
def test_substitution_within_exponent_bounds(b):
    a, bb, c = LAW.exponents(b.n_class)
    pairs = ((a, bb), (bb, c), (a, c))
    for s, (x, y) in zip(substitution_elasticities(b), pairs):
        assert min(x, y) + 1 - 1e-12 <= s <= max(x, y) + 1 + 1e-12


def test_allen_uzawa_below_one():
    au = allen_uzawa_elasticities(InputBundle(5000, 2e5, 1e6, 10))
    assert au == pytest.approx((0.8167, 0.6140, 0.7676), abs=1e-3)
    assert all(0 < v < 1 for v in au)


@pytest.mark.xfail(strict=True, reason="the closed-form weighted average lies in [1+min, 1+max] "
                                       "while bordered-Hessian Allen-Uzawa values of this isoquant are below 1")
def test_closed_form_substitution_matches_allen_uzawa():
    b = InputBundle(5000, 2e5, 1e6, 10)
    assert substitution_elasticities(b) == pytest.approx(allen_uzawa_elasticities(b), abs=1e-3)
