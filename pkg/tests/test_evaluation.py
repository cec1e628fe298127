import numpy as np
import pytest

from covcast.config import QUANTILE_LEVELS
from covcast.dataio import Covariate, TimeSeriesSample
from covcast.errors import MetricError
from covcast.evaluation import (
    EvalTask,
    aggregate,
    mase,
    rolling_tasks,
    task_view,
    wql,
)


def brute_force_mase(forecast, truth, context, period):
    num = sum(abs(t - f) for t, f in zip(truth, forecast)) / len(truth)
    terms = [abs(context[t] - context[t + period]) for t in range(len(context) - period)]
    den = sum(terms) / len(terms)
    return num / max(den, 1e-10)


def brute_force_wql(forecast, truth, levels):
    total, used = 0.0, 0
    for t in range(len(truth)):
        if abs(truth[t]) < 1e-10:
            continue
        used += 1
        for j, q in enumerate(levels):
            if forecast[t][j] <= truth[t]:
                loss = q * (truth[t] - forecast[t][j])
            else:
                loss = (1 - q) * (forecast[t][j] - truth[t])
            total += loss / abs(truth[t])
    return total / (len(levels) * used)


# --- mase -------------------------------------------------------------------


def test_mase_perfect_forecast():
    assert mase(np.array([5.0, 6.0]), np.array([5.0, 6.0]),
                np.arange(10.0), period=1) == 0.0


def test_mase_hand_case():
    assert mase(np.array([4.0, 5.0]), np.array([5.0, 6.0]),
                np.array([1.0, 2.0, 3.0, 4.0]), period=1) == pytest.approx(1.0)


def test_mase_constant_context_floored():
    value = mase(np.array([1.0]), np.array([2.0]), np.full(10, 3.0), period=1)
    assert np.isfinite(value) and value == pytest.approx(1.0 / 1e-10)


def test_mase_requires_context_beyond_period():
    with pytest.raises(MetricError):
        mase(np.array([1.0]), np.array([1.0]), np.arange(3.0), period=3)


def test_mase_scale_invariance():
    rng = np.random.default_rng(0)
    context = rng.normal(size=50)
    truth = rng.normal(size=8)
    forecast = rng.normal(size=8)
    a = mase(forecast, truth, context, 5)
    b = mase(7 * forecast, 7 * truth, 7 * context, 5)
    assert a == pytest.approx(b, rel=1e-12)


def test_mase_against_brute_force_oracle():
    rng = np.random.default_rng(1)
    for _ in range(300):
        T = int(rng.integers(5, 60))
        S = int(rng.integers(1, T))
        h = int(rng.integers(1, 10))
        context = rng.normal(size=T)
        truth = rng.normal(size=h)
        forecast = rng.normal(size=h)
        assert mase(forecast, truth, context, S) == pytest.approx(
            brute_force_mase(forecast, truth, context, S), rel=1e-12
        )


# --- wql --------------------------------------------------------------------


def test_wql_zero_on_exact():
    truth = np.array([3.0, -4.0])
    forecast = np.tile(truth[:, None], (1, 9))
    assert wql(forecast, truth) == 0.0


def test_wql_hand_case_one_over_ninety():
    truth = np.array([10.0])
    forecast = np.tile(truth[:, None], (1, 9)).astype(float)
    forecast[0, 8] = 20.0  # level 0.9 predicts 20
    assert wql(forecast, truth) == pytest.approx(1.0 / 90.0, abs=1e-12)


def test_wql_joint_scaling_invariance():
    rng = np.random.default_rng(2)
    truth = rng.normal(size=6) + 3
    forecast = np.sort(rng.normal(size=(6, 9)), axis=1) + 3
    assert wql(7 * forecast, 7 * truth) == pytest.approx(wql(forecast, truth), rel=1e-12)


def test_wql_excludes_near_zero_truth():
    truth = np.array([0.0, 10.0])
    forecast = np.tile(truth[:, None], (1, 9)).astype(float)
    forecast[1, 8] = 20.0
    assert wql(forecast, truth) == pytest.approx(1.0 / 90.0, abs=1e-12)


def test_wql_all_zero_truth_undefined():
    with pytest.raises(MetricError):
        wql(np.ones((2, 9)), np.zeros(2))


def test_wql_against_brute_force_oracle():
    rng = np.random.default_rng(3)
    for _ in range(300):
        h = int(rng.integers(1, 12))
        truth = rng.normal(size=h) * 3
        truth[rng.uniform(size=h) < 0.1] = 0.0
        if not (np.abs(truth) >= 1e-10).any():
            continue
        forecast = rng.normal(size=(h, 9))
        assert wql(forecast, truth) == pytest.approx(
            brute_force_wql(forecast, truth, QUANTILE_LEVELS), rel=1e-12, abs=1e-15
        )


def test_wql_constant_rows_match_scalar_loop():
    rng = np.random.default_rng(4)
    truth = rng.normal(size=5) + 10
    c = 8.5
    forecast = np.full((5, 9), c)
    assert wql(forecast, truth) == pytest.approx(
        brute_force_wql(forecast, truth, QUANTILE_LEVELS), rel=1e-12
    )


# --- rolling schedule -------------------------------------------------------


def make_series_sample(n, period, sid="r"):
    return TimeSeriesSample(id=sid, target=np.arange(float(n)),
                            context_length=n - period, horizon=period, period=period)


def test_rolling_one_period():
    tasks, warnings = rolling_tasks(make_series_sample(1000, 24), horizon_periods=(1,))
    assert not warnings
    assert [t.origin for t in tasks] == [904, 928, 952, 976]
    assert all(t.horizon == 24 for t in tasks)


def test_rolling_two_periods():
    tasks, _ = rolling_tasks(make_series_sample(1000, 24), horizon_periods=(2,))
    assert [t.origin for t in tasks] == [904, 952]
    assert all(t.horizon == 48 for t in tasks)


def test_rolling_minimum_one_roll():
    tasks, warnings = rolling_tasks(make_series_sample(60, 24), horizon_periods=(1,))
    assert not warnings
    assert [t.origin for t in tasks] == [36]


def test_rolling_too_short_skipped_with_warning():
    tasks, warnings = rolling_tasks(make_series_sample(48, 24), horizon_periods=(1,))
    assert tasks == []
    assert len(warnings) == 1 and "skipped" in warnings[0]


def test_task_view_slices_covariates():
    n = 100
    cov_full = np.arange(float(n))
    cov_past = np.arange(float(n - 10))  # known span = context_length
    sample = TimeSeriesSample(
        id="v", target=np.arange(float(n)), context_length=90, horizon=10,
        covariates={
            "f": Covariate(kind="past_and_future", values=cov_full),
            "p": Covariate(kind="past_only", values=cov_past),
        },
        period=5,
    )
    task = EvalTask(sample_id="v", origin=80, horizon=10, period=5)
    view = task_view(sample, task)
    assert view.context_length == 80 and view.horizon == 10
    assert len(view.target) == 90
    np.testing.assert_array_equal(view.covariates["f"].values, cov_full[:90])
    np.testing.assert_array_equal(view.covariates["p"].values, cov_past[:80])


# --- aggregation ------------------------------------------------------------


def test_aggregate_reciprocal_symmetry():
    scores = {
        "g1": {"m": 0.5, "base": 1.0},
        "g2": {"m": 2.0, "base": 1.0},
    }
    table = aggregate(scores, "base")
    assert table.geo_mean["m"] == pytest.approx(1.0)
    assert table.geo_mean["base"] == 1.0


def test_aggregate_baseline_is_one():
    scores = {
        "g1": {"m": 0.7, "base": 1.4},
        "g2": {"m": 2.0, "base": 0.5},
    }
    table = aggregate(scores, "base")
    assert all(table.relative[g]["base"] == 1.0 for g in scores)
    assert table.geo_mean["base"] == pytest.approx(1.0)


def test_aggregate_against_brute_force():
    rng = np.random.default_rng(5)
    models = ["a", "b", "c", "naive"]
    scores = {
        f"g{i}": {m: float(rng.uniform(0.5, 2.0)) for m in models} for i in range(5)
    }
    table = aggregate(scores, "naive")
    for m in models:
        rels = [scores[g][m] / scores[g]["naive"] for g in scores]
        expected = np.exp(np.mean(np.log(rels)))
        assert table.geo_mean[m] == pytest.approx(expected, rel=1e-12)
        ranks = []
        for g in scores:
            vals = sorted(scores[g].values())
            ranks.append(vals.index(scores[g][m]) + 1)
        assert table.avg_rank[m] == pytest.approx(np.mean(ranks))


def test_aggregate_tie_ranks_are_mean():
    scores = {"g": {"a": 1.0, "b": 1.0, "naive": 2.0}}
    table = aggregate(scores, "naive")
    assert table.avg_rank["a"] == 1.5
    assert table.avg_rank["b"] == 1.5
    assert table.avg_rank["naive"] == 3.0


def test_aggregate_order_invariance():
    scores = {
        "g1": {"m": 0.7, "base": 1.4},
        "g2": {"m": 2.0, "base": 0.5},
        "g3": {"m": 1.1, "base": 1.0},
    }
    permuted = {k: scores[k] for k in ["g3", "g1", "g2"]}
    a = aggregate(scores, "base")
    b = aggregate(permuted, "base")
    assert a.geo_mean == b.geo_mean
    assert a.avg_rank == b.avg_rank


def test_aggregate_nonpositive_excluded_with_warning():
    scores = {
        "g1": {"m": -0.5, "base": 1.0},
        "g2": {"m": 2.0, "base": 1.0},
    }
    table = aggregate(scores, "base")
    assert len(table.warnings) == 1
    assert table.geo_mean["m"] == pytest.approx(2.0)


def test_aggregate_missing_baseline():
    with pytest.raises(MetricError):
        aggregate({"g": {"m": 1.0}}, "base")
