import numpy as np
import pytest

from covcast.augment import (
    FULL_DOMAIN_RULE,
    ActiveSetRule,
    AugmentationConfig,
    CovariatePool,
    ImpactFunction,
    active_set,
    augment_sample,
    compute_impact,
    draw_covariate,
    empirical_quantile,
    sample_covariate_count,
    sample_impact_function,
    truncated_count_mean,
)
from covcast.errors import ConfigError
from covcast.rng import substream


def test_degenerate_count_parameter():
    config = AugmentationConfig(covariate_count_p=1 - 1e-12)
    rng = substream(0, "count")
    counts = [sample_covariate_count(config, rng) for _ in range(1000)]
    assert all(k == 0 for k in counts)


def test_count_mean_matches_exact_summation():
    config = AugmentationConfig()
    rng = substream(1, "count")
    draws = np.array([sample_covariate_count(config, rng) for _ in range(200_000)])
    exact = truncated_count_mean(0.25, 10)
    assert abs(draws.mean() - exact) < 0.02
    assert draws.min() >= 0 and draws.max() <= 10


def test_impact_function_branch_fractions():
    config = AugmentationConfig()
    rng = substream(2, "impact")
    n = 50_000
    fns = [sample_impact_function(config, rng) for _ in range(n)]
    zero_fraction = sum(f.is_zero() for f in fns) / n
    assert zero_fraction == pytest.approx(0.2, abs=0.01)
    nonzero = [f for f in fns if not f.is_zero()]
    gated = sum(not f.rule.is_full_domain() for f in nonzero) / len(nonzero)
    assert gated == pytest.approx(0.85, abs=0.01)
    assert all(0 <= lag <= 500 for f in fns for lag in f.lag_coefficients)


def test_lag_count_distribution_matches_replay_oracle():
    # Independent oracle: replay the sampling procedure directly and compare
    # the distribution of active-lag counts (after set merging).
    config = AugmentationConfig()
    n = 30_000
    fns = [sample_impact_function(config, substream(3, "f", i)) for i in range(n)]
    observed = np.zeros(6)
    total = 0
    for f in fns:
        if f.is_zero():
            continue
        total += 1
        observed[min(len(f.lag_coefficients), 5)] += 1

    oracle = np.zeros(6)
    oracle_total = 0
    for i in range(n):
        rng = substream(103, "oracle", i)
        if rng.uniform() <= config.no_impact_prob:
            continue
        c = int(rng.geometric(config.lag_count_p))
        lags = {min(int(rng.geometric(config.lag_position_p)) - 1, config.max_lag)
                for _ in range(c)}
        oracle_total += 1
        oracle[min(len(lags), 5)] += 1

    np.testing.assert_allclose(observed / total, oracle / oracle_total, atol=0.01)


def test_impact_draw_order_is_lags_then_coefficients():
    # Construct a config that never skips and always gates off, then verify
    # the draw layout against a manual replay of the same stream.
    config = AugmentationConfig(no_impact_prob=1e-9, no_gate_prob=1 - 1e-9)
    fn = sample_impact_function(config, substream(4, "layout"))
    rng = substream(4, "layout")
    assert rng.uniform() > config.no_impact_prob
    c = int(rng.geometric(config.lag_count_p))
    lags = [min(int(rng.geometric(config.lag_position_p)) - 1, config.max_lag)
            for _ in range(c)]
    values = rng.normal(0.0, 1.0, size=c)
    expected = {}
    for lag, v in zip(lags, values):
        expected[lag] = float(v)
    assert fn.lag_coefficients == expected
    assert fn.rule == FULL_DOMAIN_RULE and fn.bias == 0.0


# --- active set -------------------------------------------------------------


def test_nearest_rank_quantile():
    assert empirical_quantile([1.0, 2.0, 3.0, 4.0], 0.5) == 2.0
    assert empirical_quantile([1.0, 2.0, 3.0, 4.0], 0.0) == 1.0
    assert empirical_quantile([1.0, 2.0, 3.0, 4.0], 1.0) == 4.0
    assert empirical_quantile([3.0, 1.0, 2.0], 0.34) == 2.0


def test_full_domain_rule_activates_everything():
    target = np.array([5.0, 1.0, 3.0, 2.0])
    mask = active_set(FULL_DOMAIN_RULE, target, np.zeros(4))
    assert mask.all()


def test_gated_rule_greater_median():
    cov = np.array([1.0, 2.0, 3.0, 4.0])
    rule = ActiveSetRule("covariate", "greater", 0.5)
    mask = active_set(rule, np.zeros(4), cov)
    np.testing.assert_array_equal(mask, [False, False, True, True])


def test_gated_rule_less_median():
    cov = np.array([1.0, 2.0, 3.0, 4.0])
    rule = ActiveSetRule("covariate", "less", 0.5)
    mask = active_set(rule, np.zeros(4), cov)
    np.testing.assert_array_equal(mask, [True, False, False, False])


# --- impact computation -----------------------------------------------------


def test_identity_impact():
    fn = ImpactFunction(bias=0.0, lag_coefficients={0: 1.0})
    cov = np.array([0.5, -1.0, 2.0])
    impact = compute_impact(fn, np.zeros(3), cov, substream(5, "i"))
    np.testing.assert_array_equal(impact, cov)


def test_zero_impact():
    fn = ImpactFunction(bias=0.0, lag_coefficients={})
    impact = compute_impact(fn, np.zeros(4), np.ones(4), substream(6, "i"))
    np.testing.assert_array_equal(impact, np.zeros(4))


def test_lagged_difference_impact():
    fn = ImpactFunction(bias=0.0, lag_coefficients={0: 1.0, 1: -1.0})
    cov = np.array([0.0, 1.0, 2.0, 3.0])
    impact = compute_impact(fn, np.zeros(4), cov, substream(7, "i"))
    np.testing.assert_array_equal(impact, [0.0, 1.0, 1.0, 1.0])


def test_lead_history_is_used():
    fn = ImpactFunction(bias=0.0, lag_coefficients={2: 1.0})
    cov = np.array([10.0, 20.0, 1.0, 2.0, 3.0])  # two history values
    impact = compute_impact(fn, np.zeros(3), cov, substream(8, "i"))
    np.testing.assert_array_equal(impact, [10.0, 20.0, 1.0])


def test_noise_scales_with_impact_variance():
    fn = ImpactFunction(bias=0.0, lag_coefficients={0: 1.0}, noise_scale=0.02)
    rng = substream(9, "noise")
    cov = np.concatenate([np.zeros(500), np.ones(500)])
    impact = compute_impact(fn, np.zeros(1000), cov, rng)
    noise = impact - cov
    assert noise.std() == pytest.approx(np.sqrt(0.02 * 0.25), rel=0.2)


# --- augmentation -----------------------------------------------------------


def make_pool(seed=0, n=20, length=200):
    rng = np.random.default_rng(seed)
    return CovariatePool(corpus=[rng.normal(size=length).cumsum() for _ in range(n)])


def test_augment_no_covariates_identity():
    config = AugmentationConfig(covariate_count_p=1 - 1e-12)
    y = np.linspace(-1, 1, 40)
    sample = augment_sample(y, make_pool(), config, substream(10, "a"),
                            context_length=30, sample_id="t")
    np.testing.assert_array_equal(sample.target, y)
    assert sample.covariates == {}
    assert sample.horizon == 10


def test_augment_zero_impacts_identity():
    config = AugmentationConfig(no_impact_prob=1 - 1e-9)
    y = np.sin(np.arange(60) / 5.0)
    sample = augment_sample(y, make_pool(), config, substream(11, "a"),
                            context_length=48)
    np.testing.assert_array_equal(sample.target, y)


def test_augment_lag0_identity_against_compute_impact():
    # One covariate, identity impact, no gating, no noise: the perturbation
    # equals the normalized covariate.
    config = AugmentationConfig(
        covariate_count_p=0.5, no_impact_prob=1e-12, no_gate_prob=1 - 1e-12,
        lag_count_p=1 - 1e-12, lag_position_p=1 - 1e-12, noise_scale=0.0,
        synth_fraction=0.0,
    )
    y = np.cos(np.arange(50) / 3.0)
    for i in range(50):
        rng = substream(12, "a", i)
        sample = augment_sample(y, make_pool(i), config, rng, context_length=40)
        k = len(sample.covariates)
        if k != 1:
            continue
        cov = next(iter(sample.covariates.values()))
        delta = sample.target - y
        # lag-count and lag-position parameters force a single lag at 0, and
        # the coefficient is the only N(0,1) draw
        lead = len(cov.values) - (50 if cov.kind == "past_and_future" else 40)
        aligned = cov.values[lead : lead + 50] if cov.kind == "past_and_future" else None
        if aligned is not None:
            coef = delta[0] / aligned[0] if aligned[0] != 0 else None
            if coef is not None:
                np.testing.assert_allclose(delta, coef * aligned, atol=1e-12)


def test_piecewise_exactness_outside_active_sets():
    # With zero noise the augmented target equals the original exactly
    # outside the union of active sets.
    config = AugmentationConfig(noise_scale=0.0, synth_fraction=0.3)
    pool = make_pool(13)
    failures = 0
    for i in range(200):
        rng = substream(13, "p", i)
        y = np.random.default_rng(1000 + i).normal(size=64)
        # replay: first draw covariates and impacts to reconstruct active sets
        replay = substream(13, "p", i)
        k = sample_covariate_count(config, replay)
        covs = [draw_covariate(pool, 64, config.max_lag, config.synth_fraction, replay)
                for _ in range(k)]
        fns = [sample_impact_function(config, replay) for _ in range(k)]
        sample = augment_sample(y, pool, config, rng, context_length=48)
        union = np.zeros(64, dtype=bool)
        for cov, fn in zip(covs, fns):
            if not fn.is_zero():
                lead = len(cov) - 64
                union |= active_set(fn.rule, y, cov[lead:])
        if not np.array_equal(sample.target[~union], y[~union]):
            failures += 1
    assert failures == 0


def test_augment_deterministic_and_seed_sensitive():
    config = AugmentationConfig()
    y = np.arange(50.0)
    a = augment_sample(y, make_pool(14), config, substream(14, "d"), context_length=40)
    b = augment_sample(y, make_pool(14), config, substream(14, "d"), context_length=40)
    np.testing.assert_array_equal(a.target, b.target)
    assert list(a.covariates) == list(b.covariates)
    c = augment_sample(y, make_pool(14), config, substream(15, "d"), context_length=40)
    same = np.array_equal(a.target, c.target) and len(a.covariates) == len(c.covariates)
    assert not same or len(a.covariates) == 0


def test_empty_pool_with_corpus_needed_errors():
    config = AugmentationConfig(synth_fraction=0.5)
    with pytest.raises(ConfigError):
        augment_sample(np.arange(20.0), CovariatePool(corpus=[]), config,
                       substream(16, "e"), context_length=10)


def test_apply_impact_false_keeps_covariates_and_target():
    config = AugmentationConfig()
    y = np.arange(60.0)
    with_impact = augment_sample(y, make_pool(17), config, substream(17, "f"),
                                 context_length=50, apply_impact=True)
    without = augment_sample(y, make_pool(17), config, substream(17, "f"),
                             context_length=50, apply_impact=False)
    np.testing.assert_array_equal(without.target, y)
    assert list(with_impact.covariates) == list(without.covariates)
    for name in with_impact.covariates:
        np.testing.assert_array_equal(with_impact.covariates[name].values,
                                      without.covariates[name].values)
        assert with_impact.covariates[name].kind == without.covariates[name].kind
