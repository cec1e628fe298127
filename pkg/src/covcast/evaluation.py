"""Forecast metrics (MASE, WQL), rolling-origin task schedules, and
relative-score aggregation across dataset groups."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import QUANTILE_LEVELS
from .dataio import Covariate, TimeSeriesSample
from .errors import MetricError, ValidationError

ROLL_FRACTION = 0.1
DENOM_FLOOR = 1e-10


@dataclass(frozen=True)
class EvalTask:
    """One rolling-origin forecast task."""

    sample_id: str
    origin: int   # forecast start: context is [0, origin)
    horizon: int
    period: int


@dataclass
class ScoreTable:
    """Per-group scores with seasonal-naive-relative aggregation."""

    models: tuple[str, ...]
    groups: tuple[str, ...]
    raw: dict[str, dict[str, float]]       # group -> model -> mean score
    relative: dict[str, dict[str, float]]  # group -> model -> score / baseline
    geo_mean: dict[str, float]             # model -> geometric mean of relatives
    avg_rank: dict[str, float]             # model -> mean rank across groups
    warnings: list[str] = field(default_factory=list)


def mase(
    forecast_median: np.ndarray,
    truth: np.ndarray,
    context: np.ndarray,
    period: int,
) -> float:
    """Mean absolute error over the horizon, scaled by the in-context
    seasonal-naive mean absolute error."""
    forecast_median = np.asarray(forecast_median, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    context = np.asarray(context, dtype=np.float64)
    T = context.shape[0]
    if T <= period:
        raise MetricError(f"mase needs context length > period ({T} <= {period})")
    numerator = np.abs(truth - forecast_median).mean()
    denominator = np.abs(context[: T - period] - context[period:]).mean()
    return float(numerator / max(denominator, DENOM_FLOOR))


def wql(
    forecast: np.ndarray,
    truth: np.ndarray,
    levels: tuple[float, ...] = QUANTILE_LEVELS,
) -> float:
    """Quantile loss weighted per timestep by |truth|, averaged over levels
    and timesteps. Timesteps with |truth| below the floor are excluded."""
    forecast = np.asarray(forecast, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    q = np.asarray(levels, dtype=np.float64)[None, :]
    if forecast.shape != (truth.shape[0], q.shape[1]):
        raise ValidationError("forecast shape does not match truth and levels")
    keep = np.abs(truth) >= DENOM_FLOOR
    if not keep.any():
        raise MetricError("wql undefined: every truth value is (near) zero")
    residual = truth[:, None] - forecast
    ql = np.where(forecast <= truth[:, None], q * residual, (q - 1.0) * residual)
    weighted = ql[keep] / np.abs(truth[keep, None])
    return float(weighted.sum() / (q.shape[1] * int(keep.sum())))


def rolling_tasks(
    sample: TimeSeriesSample,
    horizon_periods: tuple[int, ...] = (1, 2),
) -> tuple[list[EvalTask], list[str]]:
    """Rolling schedule over the last tenth of the series.

    Per horizon setting h = periods * period: max(1, floor(0.1 N / h)) rolls,
    strided by h, the last ending at the series end. Samples too short for a
    horizon are skipped with a warning record.
    """
    n = len(sample.target)
    tasks: list[EvalTask] = []
    warnings: list[str] = []
    for periods in horizon_periods:
        h = periods * sample.period
        if n < h + sample.period + 1:
            warnings.append(
                f"sample {sample.id!r}: length {n} too short for horizon {h} "
                f"(needs {h + sample.period + 1}); skipped"
            )
            continue
        rolls = max(1, int(ROLL_FRACTION * n / h))
        for j in range(rolls, 0, -1):
            tasks.append(EvalTask(sample_id=sample.id, origin=n - j * h,
                                  horizon=h, period=sample.period))
    return tasks, warnings


def task_view(sample: TimeSeriesSample, task: EvalTask) -> TimeSeriesSample:
    """Re-root a sample at a task origin for forecasting.

    The view's context is everything before the origin. Past-and-future
    covariates must cover the task window; past-only covariates are trimmed
    to the values known at the origin.
    """
    origin, h = task.origin, task.horizon
    if origin + h > len(sample.target):
        raise ValidationError(f"task exceeds sample {sample.id!r} length")
    covs: dict[str, Covariate] = {}
    for name, cov in sample.covariates.items():
        lead = sample.covariate_lead(cov)
        span = sample.covariate_known_span(cov)
        if cov.kind == "past_and_future":
            if span < origin + h:
                raise ValidationError(
                    f"sample {sample.id!r}: covariate {name!r} does not cover "
                    f"task window [0, {origin + h})"
                )
            values = cov.values[: lead + origin + h]
        else:
            if span < origin:
                raise ValidationError(
                    f"sample {sample.id!r}: covariate {name!r} does not cover "
                    f"context [0, {origin})"
                )
            values = cov.values[: lead + origin]
        covs[name] = Covariate(kind=cov.kind, values=values)
    mask = sample.missing_mask
    return TimeSeriesSample(
        id=sample.id,
        target=sample.target[: origin + h],
        context_length=origin,
        horizon=h,
        covariates=covs,
        period=sample.period,
        missing_mask=None if mask is None else mask[: origin + h],
    )


def _mean_ranks(scores_by_model: dict[str, float]) -> dict[str, float]:
    """Ascending ranks with ties sharing the mean rank."""
    names = list(scores_by_model)
    values = np.array([scores_by_model[m] for m in names])
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(names), dtype=np.float64)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2.0 + 1.0
        for idx in order[i : j + 1]:
            ranks[idx] = mean_rank
        i = j + 1
    return dict(zip(names, ranks))


def aggregate(scores: dict[str, dict[str, float]], baseline_model: str) -> ScoreTable:
    """Normalize per-group scores by the baseline and combine across groups
    by geometric mean; also compute mean ranks (ties -> mean rank).

    ``scores`` maps group -> model -> score. Nonpositive relative scores are
    excluded from the geometric mean with a warning.
    """
    groups = tuple(scores)
    if not groups:
        raise MetricError("no groups to aggregate")
    models = tuple(scores[groups[0]])
    for group in groups:
        if tuple(scores[group]) != models:
            raise MetricError(f"group {group!r} has a different model set")
        if baseline_model not in scores[group]:
            raise MetricError(f"baseline {baseline_model!r} missing from group {group!r}")

    warnings: list[str] = []
    relative: dict[str, dict[str, float]] = {}
    for group in groups:
        base = scores[group][baseline_model]
        if base <= 0:
            raise MetricError(f"baseline score in group {group!r} is not positive")
        relative[group] = {m: scores[group][m] / base for m in models}

    geo_mean: dict[str, float] = {}
    for m in models:
        values = []
        for group in groups:
            rel = relative[group][m]
            if rel <= 0:
                warnings.append(
                    f"model {m!r} in group {group!r}: nonpositive relative score "
                    f"{rel}; excluded from geometric mean"
                )
                continue
            values.append(rel)
        if not values:
            raise MetricError(f"model {m!r} has no positive relative scores")
        geo_mean[m] = float(np.exp(np.mean(np.log(values))))

    rank_sums = {m: 0.0 for m in models}
    for group in groups:
        for m, r in _mean_ranks(scores[group]).items():
            rank_sums[m] += r
    avg_rank = {m: rank_sums[m] / len(groups) for m in models}

    return ScoreTable(
        models=models,
        groups=groups,
        raw={g: dict(scores[g]) for g in groups},
        relative=relative,
        geo_mean=geo_mean,
        avg_rank=avg_rank,
        warnings=warnings,
    )
