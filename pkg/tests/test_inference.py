import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bmtest.errors import ConfigError, DegenerateCutoffError, DegenerateStatisticError, RateConditionError
from bmtest.hypotheses import HypothesisLabel
from bmtest.inference import (
    BrownianNullConfig,
    NoBrownianNullConfig,
    make_truncation,
    s_prime_statistic,
    s_statistic,
    test_brownian_null as run_test1,
    test_nobrownian_null as run_test2,
    v_n,
    v_prime_n,
    validate_rate_conditions,
)
from bmtest.simlab import PathRecipe, StableDriver, SVJumpModel, simulate_path
from bmtest.specialfn import m_p, n_factor, normal_quantile
from bmtest.variation import Absolute, Percentile, VolMultiple

from conftest import make_path


def linear_path(delta, n):
    return make_path(delta * np.arange(n + 1))


# -- hypothesis labels ---------------------------------------------------------


def test_labels():
    lab = HypothesisLabel.build(False, True)
    assert lab.names() == ["BROWNIAN_ABSENT", "INFINITE_ACTIVITY"]
    assert HypothesisLabel.build(True, False).validate() is HypothesisLabel.BROWNIAN_PRESENT
    with pytest.raises(ValueError):
        (HypothesisLabel.BROWNIAN_PRESENT | HypothesisLabel.BROWNIAN_ABSENT).validate()


# -- test 1 building blocks ----------------------------------------------------


@pytest.mark.parametrize("p, k", [(1.5, 2), (1.25, 3), (0.5, 2)])
def test_s_on_linear_path(p, k):
    assert s_statistic(linear_path(0.01, 12), p, k, 1.0) == pytest.approx(k ** (1 - p))


def test_v_on_identical_increments():
    n, delta = 12, 0.01
    assert v_n(linear_path(delta, n), 1.5, 2, 1.0) == pytest.approx(n_factor(1.5, 2) / n)


def test_s_degenerate_when_coarse_increments_truncated():
    with pytest.raises(DegenerateStatisticError) as info:
        s_statistic(linear_path(0.6, 8), 1.5, 2, 1.0)
    assert info.value.factor == "b_coarse"


def test_v_degenerate_when_all_truncated():
    with pytest.raises(DegenerateStatisticError):
        v_n(linear_path(2.0, 8), 1.5, 2, 1.0)


def test_constant_path_is_an_error_not_a_decision():
    flat = make_path(np.zeros(100))
    with pytest.raises(DegenerateStatisticError):
        run_test1(flat, BrownianNullConfig(truncation=Absolute(1.0)))
    with pytest.raises(DegenerateCutoffError):
        run_test1(flat, BrownianNullConfig())


def test_brownian_mean_s_and_variance_scale():
    sigma = 0.25
    recipe = PathRecipe(True, SVJumpModel.constant(sigma), None, 1, 5.0, seed=31)
    p, k = 1.5, 2
    u = 10 * sigma * math.sqrt(recipe.step_years)
    s, v = [], []
    for i in range(500):
        path, _ = simulate_path(recipe, i)
        s.append(s_statistic(path, p, k, u))
        v.append(v_n(path, p, k, u))
    assert abs(np.mean(s) - 2**0.25) < 0.02
    t_years = recipe.horizon_days / 252
    predicted = n_factor(p, k) * m_p(2 * p) / (m_p(p) ** 2 * t_years) * recipe.step_years
    assert np.mean(v) == pytest.approx(predicted, rel=0.10)


def test_result_invariants(mixed_path):
    res = run_test1(mixed_path, BrownianNullConfig())
    assert res.null_limit == pytest.approx(2**0.25)
    assert res.reject == (res.s_n < res.critical_value) == res.recompute_reject()
    assert res.z_score == pytest.approx((res.s_n - res.null_limit) / math.sqrt(res.v_n))
    assert {"b_fine", "b_coarse", "b_2p", "u", "n_kept"} <= set(res.diagnostics)
    assert len(res.diagnostics["u"]) == mixed_path.n_days
    assert res.to_dict()["s_n"] == res.s_n


def test_z_score_reported_without_rejection(brownian_path):
    res = run_test1(brownian_path, BrownianNullConfig())
    assert not res.reject and math.isfinite(res.z_score)


@pytest.mark.parametrize("kwargs", [dict(p=1.0), dict(p=2.0), dict(k=1), dict(k=2.5), dict(level=0.0)])
def test_brownian_config_validation(kwargs):
    with pytest.raises(ConfigError):
        BrownianNullConfig(**kwargs)


def test_rate_condition_enforced(mixed_path):
    bad = BrownianNullConfig(p=1.5, beta0=0.9, varpi=0.3, truncation=Absolute(1e-3))
    with pytest.raises(RateConditionError):
        run_test1(mixed_path, bad)
    res = run_test1(mixed_path, replace(bad, allow_rate_violation=True))
    assert "rate_check" in res.diagnostics
    good = BrownianNullConfig(p=1.5, beta0=0.5, varpi=0.3, truncation=Absolute(1e-3))
    assert run_test1(mixed_path, good).diagnostics["rate_check"].startswith("varpi=0.3 inside")
    with pytest.raises(ConfigError):
        run_test1(mixed_path, BrownianNullConfig(beta0=0.5, truncation=Absolute(1e-3)))


# -- rate conditions -----------------------------------------------------------


def test_rate_examples():
    ok = validate_rate_conditions("test-1", 0.5, 0.3, p=1.5)
    assert ok and ok.interval == pytest.approx((0.25, 1 / 3))
    assert not validate_rate_conditions("test-1", 0.9, 0.3, p=1.5)
    assert "p=1.5" in validate_rate_conditions("test-1", 0.9, 0.3, p=1.5).explanation
    assert validate_rate_conditions("test-2", 1.5, 0.1)
    assert not validate_rate_conditions("test-2", 1.5, 0.12)


def test_rate_conditions_window_for_cauchy_is_empty():
    check = validate_rate_conditions("test-1", 0.999, 0.3, p=1.999)
    lo, hi = check.interval
    assert lo > hi or not check


def test_rate_condition_errors():
    with pytest.raises(ConfigError):
        validate_rate_conditions("test-1", 0.5, 0.3)
    with pytest.raises(ConfigError):
        validate_rate_conditions("test-3", 0.5, 0.3, p=1.5)
    assert not validate_rate_conditions("test-2", 0.5, 0.1)
    assert not validate_rate_conditions("test-1", 1.2, 0.3, p=1.5)


# -- test 2 building blocks ----------------------------------------------------


def two_level_path(n_small, delta, m_mid, x, m_big, y):
    incs = [delta] * n_small + [x] * m_mid + [y] * m_big
    return make_path(np.concatenate(([0.0], np.cumsum(incs))))


def test_s_prime_and_v_prime_by_hand():
    n, d, m, x, q, y = 10, 0.1, 4, 1.5, 3, 5.0
    u, g = 1.0, 2.0
    path = two_level_path(n, d, m, x, q, y)
    b2u, b2g = n * d**2, n * d**2 + m * x**2
    b4u, b4g = n * d**4, n * d**4 + m * x**4
    uu, ug = m + q, q
    assert s_prime_statistic(path, g, u) == pytest.approx(b2g * uu / (b2u * ug))
    expected = g**4 * (b4u / b2u**2 + 1 / uu + (1 - 2 / g**2) * (b4g / b2g**2 + 1 / ug))
    assert v_prime_n(path, g, u) == pytest.approx(expected)


def test_v_prime_at_sqrt2_drops_high_level():
    path = two_level_path(10, 0.1, 4, 1.2, 3, 5.0)
    res_ing = (10 * 0.1**4) / (10 * 0.1**2) ** 2 + 1 / 7
    assert v_prime_n(path, math.sqrt(2), 1.0) == pytest.approx(4 * res_ing)


def test_s_prime_degenerate_when_nothing_exceeds():
    path = linear_path(0.1, 20)
    with pytest.raises(DegenerateStatisticError) as info:
        s_prime_statistic(path, 2.0, 1.0)
    assert info.value.factor == "u_gu"
    with pytest.raises(DegenerateStatisticError):
        v_prime_n(path, 2.0, 1.0)


def test_nobrownian_result_invariants(cauchy_path):
    res = run_test2(cauchy_path, NoBrownianNullConfig(truncation=Percentile(0.002)))
    assert res.null_limit == 4.0
    assert res.reject == (res.s_prime_n < res.critical_value) == res.recompute_reject()
    assert res.critical_value == pytest.approx(4 - normal_quantile(0.05) * math.sqrt(res.v_prime_n))
    assert res.diagnostics["u_u"] >= res.diagnostics["u_gu"]


def test_gamma_one_is_config_error():
    with pytest.raises(ConfigError):
        NoBrownianNullConfig(gamma=1.0)


def test_test2_rate_condition_enforced(cauchy_path):
    cfg = NoBrownianNullConfig(beta0=1.5, varpi=0.2, truncation=Percentile(0.002))
    with pytest.raises(RateConditionError):
        run_test2(cauchy_path, cfg)
    assert run_test2(cauchy_path, replace(cfg, allow_rate_violation=True)).s_prime_n > 0


def test_make_truncation():
    assert make_truncation("vol", 7) == VolMultiple(7, 0.49)
    assert make_truncation("percentile", 0.01) == Percentile(0.01)
    assert make_truncation("abs", 0.5) == Absolute(0.5)
    with pytest.raises(ConfigError):
        make_truncation("median", 1)


# -- properties ----------------------------------------------------------------


@given(st.sampled_from([0.25, 0.5, 2.0, 8.0]), st.sampled_from([1.25, 1.5, 1.75]))
def test_scale_invariance(cauchy_path, c, p):
    # powers of two scale every increment exactly; c**p is exact only for
    # the integer powers of test 2, so test 1 agrees to rounding
    u = float(np.quantile(np.abs(np.diff(cauchy_path.observations)), 0.99))
    scaled = cauchy_path.with_observations(cauchy_path.observations * c)
    r1 = run_test1(cauchy_path, BrownianNullConfig(p=p, truncation=Absolute(u)))
    r2 = run_test1(scaled, BrownianNullConfig(p=p, truncation=Absolute(c * u)))
    assert r2.s_n == pytest.approx(r1.s_n, rel=1e-13) and r2.reject == r1.reject
    assert r2.v_n == pytest.approx(r1.v_n, rel=1e-12)
    q1 = run_test2(cauchy_path, NoBrownianNullConfig(truncation=Absolute(u)))
    q2 = run_test2(scaled, NoBrownianNullConfig(truncation=Absolute(c * u)))
    assert q2.s_prime_n == q1.s_prime_n and q2.reject == q1.reject
    assert q2.v_prime_n == pytest.approx(q1.v_prime_n, rel=1e-12)


@given(st.floats(1e-4, 1e-2), st.floats(1.1, 4))
def test_exceedances_nested_and_no_silent_nan(cauchy_path, u, g):
    try:
        res = run_test2(cauchy_path, NoBrownianNullConfig(gamma=g, truncation=Absolute(u)))
    except DegenerateStatisticError as exc:
        assert exc.factor in {"b2_u", "b2_gu", "u_u", "u_gu"}
        return
    assert res.diagnostics["u_u"] >= res.diagnostics["u_gu"]
    assert np.isfinite([res.s_prime_n, res.v_prime_n, res.z_score]).all()


@given(st.floats(-3, 3), st.floats(1e-6, 1), st.sampled_from([0.01, 0.05, 0.1]))
def test_decision_identity(s, v, level):
    from bmtest.inference import BrownianNullResult

    limit = 2**0.25
    crit = limit - normal_quantile(level) * math.sqrt(v)
    res = BrownianNullResult(s, v, limit, crit, (s - limit) / math.sqrt(v), bool(s < crit), level)
    assert res.recompute_reject() == res.reject
