import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bmtest.errors import DataError, DegenerateCutoffError, EmptySeriesError, ConfigError
from bmtest.simlab import PathRecipe, SVJumpModel, simulate_path
from bmtest.variation import (
    Absolute,
    Percentile,
    SampledPath,
    VolMultiple,
    cutoff_per_day,
    estimate_integrated_volatility,
    exceedance_count,
    increments,
    resolve_cutoff,
    truncated_power_variation,
)

from conftest import make_path


def incs_of(values):
    return increments(make_path(np.concatenate(([0.0], np.cumsum(values)))), 1)


# -- SampledPath ---------------------------------------------------------------


@pytest.mark.parametrize("values, offsets", [
    ([1.0], None),
    ([0.0, np.nan], None),
    ([0.0, 1.0, 2.0], [1]),
    ([0.0, 1.0, 2.0], [0, 0]),
    ([0.0, 1.0, 2.0], [0, 3]),
])
def test_sampled_path_rejects_invalid(values, offsets):
    with pytest.raises(DataError):
        make_path(values, offsets)


def test_sampled_path_rejects_bad_step():
    with pytest.raises(DataError):
        SampledPath(0.0, [0.0, 1.0])


def test_select_days_keeps_layout():
    p = make_path([0, 1, 2, 10, 11, 12, 20, 21], [0, 3, 6])
    sub = p.select_days(range(1, 3))
    np.testing.assert_array_equal(sub.observations, [10, 11, 12, 20, 21])
    np.testing.assert_array_equal(sub.day_offsets, [0, 3])


# -- increments ----------------------------------------------------------------


def test_increments_stride_one():
    np.testing.assert_array_equal(increments(make_path([0, 1, 3, 6]), 1).values, [1, 2, 3])


def test_increments_stride_two_drops_nothing_when_exact():
    np.testing.assert_array_equal(increments(make_path([0, 1, 3, 6, 10]), 2).values, [3, 7])


def test_increments_drop_trailing_partial_block():
    np.testing.assert_array_equal(increments(make_path([0, 1, 3, 6]), 2).values, [3])


def test_increments_exclude_overnight():
    incs = increments(make_path([0, 1, 2, 10, 11, 12], [0, 3]), 1)
    np.testing.assert_array_equal(incs.values, [1, 1, 1, 1])
    np.testing.assert_array_equal(incs.day_counts, [2, 2])


def test_increments_stride_longer_than_every_day():
    with pytest.raises(EmptySeriesError):
        increments(make_path([0, 1, 2, 10, 11, 12], [0, 3]), 3)


def test_increments_short_day_contributes_nothing():
    incs = increments(make_path([0, 1, 2, 3, 4, 10, 11], [0, 5]), 2)
    np.testing.assert_array_equal(incs.values, [2, 2])
    np.testing.assert_array_equal(incs.day_counts, [2, 0])


def test_increments_bad_stride():
    with pytest.raises(ConfigError):
        increments(make_path([0, 1]), 0)


@given(arrays(float, st.integers(2, 40), elements=st.floats(-5, 5)), st.integers(1, 6))
def test_stride_is_telescoped_blocks(values, k):
    path = make_path(np.concatenate(([0.0], np.cumsum(values))))
    fine = increments(path, 1).values
    n_blocks = fine.size // k
    if n_blocks == 0:
        return
    coarse = increments(path, k).values
    np.testing.assert_allclose(coarse, fine[: n_blocks * k].reshape(n_blocks, k).sum(axis=1), atol=1e-9)


# -- truncated power variation and exceedances ---------------------------------


def test_tpv_examples():
    incs = incs_of([0.5, -2.0, 0.1])
    assert truncated_power_variation(incs, 2.0, 1.0) == pytest.approx(0.26)
    assert truncated_power_variation(incs, 1.5, 1.0) == pytest.approx(0.5**1.5 + 0.1**1.5)
    assert truncated_power_variation(incs, 1.5, 1.0) == pytest.approx(0.385176, abs=1e-6)
    assert truncated_power_variation(incs_of([0.0, 0.0]), 1.3, 0.1) == 0.0


def test_exceedance_examples():
    assert exceedance_count(incs_of([0.5, -2.0, 0.1]), 1.0) == 1
    assert exceedance_count(incs_of([1.0]), 1.0) == 0
    assert exceedance_count(incs_of([-3.0, 3.0, 0.0]), 2.9) == 2


def test_boundary_goes_to_variation():
    incs = incs_of([1.0])
    assert truncated_power_variation(incs, 2.0, 1.0) == 1.0


def test_invalid_power_and_cutoff():
    incs = incs_of([0.5])
    with pytest.raises(ConfigError):
        truncated_power_variation(incs, 0.0, 1.0)
    with pytest.raises(ConfigError):
        exceedance_count(incs, -1.0)
    with pytest.raises(ConfigError):
        truncated_power_variation(incs, 2.0, [1.0, 2.0])


def test_per_day_cutoffs_apply_to_their_day():
    incs = increments(make_path([0, 1, 2, 10, 13, 16], [0, 3]), 1)
    # day 0 increments 1, 1; day 1 increments 3, 3
    assert truncated_power_variation(incs, 2.0, [0.5, 5.0]) == 18.0
    assert exceedance_count(incs, [0.5, 5.0]) == 2


finite = st.floats(-10, 10, allow_nan=False)
series = arrays(float, st.integers(1, 12), elements=finite)


def naive_b(values, p, u):
    total = 0.0
    for x in values:
        if abs(x) <= u:
            total += abs(x) ** p
    return total


def naive_u(values, u):
    return sum(1 for x in values if abs(x) > u)


@given(series, st.floats(0.1, 4), st.floats(0.01, 12))
def test_oracle_equivalence(values, p, u):
    incs = increments(make_path(np.concatenate(([0.0], np.cumsum(values)))), 1)
    vals = incs.values
    assert truncated_power_variation(incs, p, u) == pytest.approx(naive_b(vals, p, u), rel=1e-12, abs=1e-300)
    assert exceedance_count(incs, u) == naive_u(vals, u)


@given(series, st.floats(0.01, 12))
def test_partition(values, u):
    incs = incs_of(values)
    kept = np.count_nonzero(np.abs(incs.values) <= u)
    assert kept + exceedance_count(incs, u) == len(incs)


@given(series, st.floats(0.1, 4), st.floats(0.01, 6), st.floats(0.01, 6))
def test_monotone_in_cutoff(values, p, u1, u2):
    lo, hi = sorted((u1, u2))
    incs = incs_of(values)
    assert truncated_power_variation(incs, p, lo) <= truncated_power_variation(incs, p, hi)
    assert exceedance_count(incs, lo) >= exceedance_count(incs, hi)


@given(series, st.floats(0.1, 4), st.floats(0.01, 6), st.sampled_from([0.5, 2.0, 4.0, 0.125]))
def test_scaling(values, p, u, c):
    # powers of two keep the scaled comparisons exact
    incs = incs_of(values)
    scaled = incs_of(np.asarray(values) * c)
    np.testing.assert_allclose(truncated_power_variation(scaled, p, c * u),
                               c**p * truncated_power_variation(incs, p, u), rtol=1e-12, atol=1e-300)
    assert exceedance_count(scaled, c * u) == exceedance_count(incs, u)


# -- integrated volatility and cutoffs -----------------------------------------


def test_iv_without_binding_truncation_is_realized_variance(brownian_path):
    incs = increments(brownian_path, 1).values
    assert estimate_integrated_volatility(brownian_path, 1e6, 0.49) == pytest.approx(np.sum(incs**2))


def test_iv_excludes_a_jump():
    rng = np.random.default_rng(0)
    x = np.concatenate(([0.0], np.cumsum(rng.normal(0, 1e-4, 500))))
    x[250:] += 0.05
    path = make_path(x)
    rv = np.sum(np.diff(x) ** 2)
    iv = estimate_integrated_volatility(path, 1.0, 0.3)
    assert iv < rv - 0.05**2 * 0.99


def test_iv_monotone_in_alpha(mixed_path):
    vals = [estimate_integrated_volatility(mixed_path, a, 0.49) for a in (0.1, 0.5, 1, 5, 50)]
    assert vals == sorted(vals)


def test_iv_mean_matches_integrated_variance():
    recipe = PathRecipe(True, SVJumpModel.constant(0.25), None, 1, 5.0, seed=7)
    est = []
    for i in range(200):
        path, _ = simulate_path(recipe, i)
        est.append(estimate_integrated_volatility(path, 10.0, 0.49))
    est = np.asarray(est)
    target = 0.25**2 * recipe.horizon_days / 252
    assert abs(est.mean() - target) < 3 * est.std(ddof=1) / math.sqrt(est.size)


def test_iv_rejects_bad_args(brownian_path):
    with pytest.raises(ConfigError):
        estimate_integrated_volatility(brownian_path, 0.0, 0.3)
    with pytest.raises(ConfigError):
        estimate_integrated_volatility(brownian_path, 1.0, 0.5)


def test_absolute_cutoff_single_span(mixed_path):
    spans = resolve_cutoff(mixed_path, Absolute(0.01), per_day=False)
    assert len(spans) == 1 and spans[0].u == 0.01 and list(spans[0].days) == [0, 1]


def test_percentile_cutoff_exceedance_fraction(cauchy_path):
    spans = resolve_cutoff(cauchy_path, Percentile(0.05))
    incs = increments(cauchy_path, 1)
    frac = exceedance_count(incs, spans[0].u) / len(incs)
    assert abs(frac - 0.05) < 1.0 / len(incs) + 1e-12


def test_percentile_cutoff_matches_quantile():
    rng = np.random.default_rng(3)
    x = np.concatenate(([0.0], np.cumsum(rng.standard_normal(1001))))
    path = make_path(x)
    u = resolve_cutoff(path, Percentile(0.05))[0].u
    assert u == pytest.approx(np.quantile(np.abs(np.diff(x)), 0.95))


def test_vol_multiple_recovers_sigma(brownian_path):
    spans = resolve_cutoff(brownian_path, VolMultiple(7.0, 0.49), per_day=True)
    expected = 7 * 0.25 * math.sqrt(brownian_path.step_years)
    for span in spans:
        assert span.u == pytest.approx(expected, rel=0.05)
    u = cutoff_per_day(spans, brownian_path.n_days)
    assert u.shape == (2,)


def test_vol_multiple_degenerate_on_constant_day():
    path = make_path([0, 0.001, 0.002, 5, 5, 5], [0, 3])
    with pytest.raises(DegenerateCutoffError) as info:
        resolve_cutoff(path, VolMultiple(3.0, 0.3), per_day=True)
    assert info.value.span == (1, 1)


def test_percentile_degenerate_on_flat_path():
    with pytest.raises(DegenerateCutoffError):
        resolve_cutoff(make_path([1.0, 1.0, 1.0]), Percentile(0.1))


@pytest.mark.parametrize("factory", [
    lambda: VolMultiple(0.0),
    lambda: VolMultiple(1.0, 0.5),
    lambda: VolMultiple(1.0, 0.3, -1),
    lambda: Percentile(0.0),
    lambda: Percentile(1.0),
    lambda: Absolute(0.0),
])
def test_truncation_spec_validation(factory):
    with pytest.raises(ConfigError):
        factory()
