"""Seasonal naive forecaster and the linear in-context covariate model.

The in-context model regresses the covariates on the target over the
context window (ridge, intercept unpenalized via centering), forecasts the
regression residuals with any covariate-free base forecaster, and adds the
linear component evaluated on the known future covariate values back onto
every quantile row.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import QUANTILE_LEVELS
from .dataio import QuantileForecast, TimeSeriesSample
from .errors import CapabilityError, SolverError, ValidationError
from .preprocess import ScalerState, fit_scaler

# A base forecaster maps (context, period, horizon) to a QuantileForecast.
BaseForecaster = Callable[[np.ndarray, int, int], QuantileForecast]


def seasonal_naive(
    context: np.ndarray,
    period: int,
    horizon: int,
    levels: tuple[float, ...] = QUANTILE_LEVELS,
) -> QuantileForecast:
    """Repeat the last observed seasonal cycle; all quantile rows equal.

    Contexts shorter than one period fall back to last-value carry (S=1).
    """
    context = np.asarray(context, dtype=np.float64)
    n = context.shape[0]
    if n == 0:
        raise ValidationError("seasonal_naive needs a non-empty context")
    if n < period:
        period = 1
    offsets = (np.arange(1, horizon + 1) - 1) % period
    point = context[n - period + offsets]
    return QuantileForecast(levels=tuple(levels),
                            values=np.tile(point[:, None], (1, len(levels))))


@dataclass
class InContextLinearModel:
    """Ridge fit of the covariates against the target over the context."""

    intercept: float
    coefficients: np.ndarray            # per covariate, original scale
    covariate_names: tuple[str, ...]
    ridge_lambda: float
    target_scaler: ScalerState
    covariate_scalers: tuple[ScalerState, ...]


def _context_matrix(sample: TimeSeriesSample, names: list[str]) -> np.ndarray:
    T = sample.context_length
    columns = []
    for name in names:
        cov = sample.covariates[name]
        lead = sample.covariate_lead(cov)
        columns.append(np.asarray(cov.values[lead : lead + T], dtype=np.float64))
    return np.column_stack(columns) if columns else np.empty((T, 0))


def fit_in_context(sample: TimeSeriesSample, ridge_lambda: float = 1.0) -> InContextLinearModel:
    """Solve the ridge system on the z-standardized context.

    Requires every covariate to be known over the horizon (past-and-future):
    the linear component must be evaluable on future values.
    """
    if ridge_lambda < 0:
        raise ValidationError("ridge_lambda must be >= 0")
    for name, cov in sample.covariates.items():
        if cov.kind != "past_and_future":
            raise CapabilityError(
                f"in-context linear model cannot handle past-only covariate {name!r}"
            )
    names = list(sample.covariates)
    k = len(names)
    T = sample.context_length
    if T <= k:
        raise ValidationError(f"context length {T} must exceed covariate count {k}")

    y = np.asarray(sample.target[:T], dtype=np.float64)
    y_scaler = fit_scaler(y)
    X = _context_matrix(sample, names)
    scalers = tuple(fit_scaler(X[:, j]) for j in range(k))

    if k == 0:
        coef = np.empty(0)
    else:
        Xs = np.column_stack([(X[:, j] - scalers[j].mean) / scalers[j].std for j in range(k)])
        ys = (y - y_scaler.mean) / y_scaler.std
        gram = Xs.T @ Xs
        if ridge_lambda == 0.0 and np.linalg.matrix_rank(gram) < k:
            raise SolverError(
                "covariate design matrix is rank deficient; use ridge_lambda > 0"
            )
        try:
            beta = np.linalg.solve(gram + ridge_lambda * np.eye(k), Xs.T @ ys)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"ridge solve failed: {exc}; use ridge_lambda > 0") from exc
        coef = beta * y_scaler.std / np.array([s.std for s in scalers])

    intercept = y_scaler.mean - float(coef @ np.array([s.mean for s in scalers])) if k else y_scaler.mean
    return InContextLinearModel(
        intercept=float(intercept),
        coefficients=coef,
        covariate_names=tuple(names),
        ridge_lambda=ridge_lambda,
        target_scaler=y_scaler,
        covariate_scalers=scalers,
    )


def linear_component(model: InContextLinearModel, sample: TimeSeriesSample,
                     start: int, end: int) -> np.ndarray:
    """Evaluate intercept + sum_i a_i x_i over timeline [start, end)."""
    out = np.full(end - start, model.intercept, dtype=np.float64)
    for name, coef in zip(model.covariate_names, model.coefficients):
        cov = sample.covariates[name]
        lead = sample.covariate_lead(cov)
        segment = np.asarray(cov.values[lead + start : lead + end], dtype=np.float64)
        if segment.shape[0] != end - start:
            raise ValidationError(f"covariate {name!r} does not cover [{start}, {end})")
        out += coef * segment
    return out


def in_context_forecast(
    model: InContextLinearModel,
    sample: TimeSeriesSample,
    base_forecaster: BaseForecaster,
) -> QuantileForecast:
    """Forecast = base forecast of the regression residuals + linear part."""
    T = sample.context_length
    h = sample.horizon
    fitted = linear_component(model, sample, 0, T)
    residuals = np.asarray(sample.target[:T], dtype=np.float64) - fitted
    residual_fc = base_forecaster(residuals, sample.period, h)
    future_linear = linear_component(model, sample, T, T + h)
    return QuantileForecast(
        levels=residual_fc.levels,
        values=residual_fc.values + future_linear[:, None],
    )
