"""Desk-scale studies on fully synthetic data.

``run_ablation`` trains two identical models, one on an augmented corpus and
one on a corpus whose covariates were sampled but never applied to the
target, then scores both with and without covariate access on an evaluation
set carrying deterministic covariate impacts.

``run_impact_sensitivity`` measures how the value of covariate access grows
with the number of impact events observable in the context, comparing any
set of forecasters cell by cell on a shared grid of (event count, covariate
count).

Reports are plain dicts, pure functions of (seed, configs), and embed their
resolved configuration.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .augment import CovariatePool, augment_sample
from .baselines import fit_in_context, in_context_forecast, seasonal_naive
from .config import (
    AugmentationConfig,
    EvalConfig,
    ModelConfig,
    TrainConfig,
    config_to_dict,
)
from .dataio import Covariate, QuantileForecast, TimeSeriesSample
from .errors import ConfigError
from .evaluation import mase, wql
from .model import Params, init_params, predict
from .preprocess import fit_scaler, normalize
from .rng import substream
from .training import train

Forecaster = Callable[[TimeSeriesSample], QuantileForecast]

FORECAST_METHODS = ("transformer", "transformer-nocov", "seasonal-naive", "ridge-ctx")


# ---------------------------------------------------------------------------
# synthetic data


def synthetic_target(length: int, rng: np.random.Generator,
                     base_level: float = 0.0) -> np.ndarray:
    """Random mixture of sinusoids with mild drift and observation noise."""
    t = np.arange(length, dtype=np.float64)
    out = np.full(length, base_level, dtype=np.float64)
    for _ in range(int(rng.integers(1, 4))):
        period = rng.uniform(8.0, 64.0)
        amplitude = rng.uniform(0.3, 1.5)
        phase = rng.uniform(0.0, 2 * np.pi)
        out += amplitude * np.sin(2 * np.pi * t / period + phase)
    out += rng.normal(0.0, 0.3) * t / length
    out += rng.normal(0.0, rng.uniform(0.02, 0.15), size=length)
    return out


def _seasonal_base(length: int, period: int, rng: np.random.Generator) -> np.ndarray:
    """Predictable evaluation base: level + one seasonal wave + small noise."""
    t = np.arange(length, dtype=np.float64)
    level = rng.uniform(4.0, 8.0)
    amplitude = rng.uniform(1.0, 2.0)
    phase = rng.uniform(0.0, 2 * np.pi)
    wave = amplitude * np.sin(2 * np.pi * t / period + phase)
    return level + wave + rng.normal(0.0, 0.05, size=length)


def _bell_events(length: int, positions: np.ndarray, amplitudes: np.ndarray,
                 widths: np.ndarray) -> np.ndarray:
    t = np.arange(length, dtype=np.float64)
    out = np.zeros(length)
    for p, a, w in zip(positions, amplitudes, widths):
        out += a * np.exp(-((t - p) ** 2) / (2.0 * w**2))
    return out


def make_covariate_pool(aug: AugmentationConfig, seed: int,
                        n_series: int = 200, series_length: int = 256) -> CovariatePool:
    rng = substream(seed, "pool")
    series = [synthetic_target(series_length, rng) for _ in range(n_series)]
    return CovariatePool(corpus=series, synth=aug.synth)


def make_training_corpus(
    n_samples: int,
    context_length: int,
    horizon: int,
    aug: AugmentationConfig,
    seed: int,
    informative: bool = True,
) -> list[TimeSeriesSample]:
    """Augmented corpus of normalized synthetic targets.

    With ``informative=False`` the exact same covariates are attached (all
    draws replay identically) but no impact is added to the target.
    """
    total = context_length + horizon
    pool = make_covariate_pool(aug, seed, series_length=max(256, total + 64))
    samples = []
    for i in range(n_samples):
        rng = substream(seed, "augment", i)
        base = synthetic_target(total, rng)
        y = normalize(base, fit_scaler(base))
        samples.append(
            augment_sample(
                y, pool, aug, rng,
                context_length=context_length,
                sample_id=f"train{i:05d}",
                apply_impact=informative,
            )
        )
    return samples


def make_impact_eval_corpus(
    n_samples: int,
    context_length: int,
    horizon: int,
    seed: int,
    *,
    n_covariates: int = 1,
    context_events: int = 6,
    horizon_event_prob: float = 1.0,
    impact_amplitude: float = 2.0,
    lag_mode: str = "fixed0",
    lag_p: float = 0.85,
    period: int = 24,
) -> list[TimeSeriesSample]:
    """Evaluation samples with deterministic bell-event covariate impacts.

    Each covariate carries ``context_events`` bell events placed uniformly in
    the context plus, with probability ``horizon_event_prob``, one extra
    event placed uniformly in the horizon. The target adds
    ``sign * impact_amplitude`` times each covariate (optionally shifted by a
    geometric lag). Base targets, impact signs and horizon events are drawn
    from streams independent of ``context_events``, so corpora for different
    event counts share everything but the context evidence.
    """
    if lag_mode not in ("fixed0", "geometric"):
        raise ConfigError(f"unknown lag_mode {lag_mode!r}")
    total = context_length + horizon
    samples = []
    for i in range(n_samples):
        rng = substream(seed, "eval", i)
        base = _seasonal_base(total, period, rng)
        covs: dict[str, Covariate] = {}
        target = base.copy()
        for j in range(n_covariates):
            signal = np.zeros(total)
            # context evidence (cell-specific stream, shared base)
            ctx_rng = substream(seed, "eval", i, "ctx", j, context_events)
            if context_events > 0:
                positions = ctx_rng.uniform(4.0, context_length - 4.0, size=context_events)
                amplitudes = ctx_rng.uniform(0.7, 1.6, size=context_events) * \
                    ctx_rng.choice([-1.0, 1.0], size=context_events)
                widths = ctx_rng.uniform(2.0, 5.0, size=context_events)
                signal += _bell_events(total, positions, amplitudes, widths)
            if rng.uniform() < horizon_event_prob:
                p = rng.uniform(context_length + 4.0, total - 4.0)
                a = rng.uniform(0.7, 1.6) * (1.0 if rng.uniform() < 0.5 else -1.0)
                w = rng.uniform(2.0, 5.0)
                signal += _bell_events(total, np.array([p]), np.array([a]), np.array([w]))
            sign = 1.0 if rng.uniform() < 0.5 else -1.0
            lag = 0
            if lag_mode == "geometric":
                lag = int(rng.geometric(lag_p)) - 1
            shifted = np.zeros(total)
            shifted[lag:] = signal[: total - lag] if lag > 0 else signal
            target += sign * impact_amplitude * shifted
            covs[f"x{j}"] = Covariate(kind="past_and_future", values=signal)
        samples.append(TimeSeriesSample(
            id=f"eval{i:05d}", target=target, context_length=context_length,
            horizon=horizon, covariates=covs, period=period,
        ))
    return samples


# ---------------------------------------------------------------------------
# forecaster registry


def make_forecaster(
    method: str,
    *,
    params: Params | None = None,
    model_config: ModelConfig | None = None,
    eval_config: EvalConfig | None = None,
) -> Forecaster:
    """Build a sample-to-forecast callable for one of the CLI methods."""
    ev = eval_config or EvalConfig()
    if method in ("transformer", "transformer-nocov"):
        if params is None or model_config is None:
            raise ConfigError(f"method {method!r} needs a model checkpoint")
        use_cov = method == "transformer"

        def transformer_forecaster(sample: TimeSeriesSample) -> QuantileForecast:
            return predict(params, sample, model_config,
                           use_covariates=use_cov, sort_quantiles=ev.sort_quantiles)

        return transformer_forecaster

    if method == "seasonal-naive":
        def naive_forecaster(sample: TimeSeriesSample) -> QuantileForecast:
            context = np.asarray(sample.target[: sample.context_length])
            return seasonal_naive(context, sample.period, sample.horizon)

        return naive_forecaster

    if method == "ridge-ctx":
        if params is not None and model_config is not None:
            def base(context: np.ndarray, period: int, horizon: int) -> QuantileForecast:
                residual_sample = TimeSeriesSample(
                    id="residual", target=np.concatenate([context, np.zeros(horizon)]),
                    context_length=len(context), horizon=horizon, period=period,
                    missing_mask=np.concatenate([np.ones(len(context), dtype=bool),
                                                 np.zeros(horizon, dtype=bool)]),
                )
                return predict(params, residual_sample, model_config,
                               use_covariates=False, sort_quantiles=ev.sort_quantiles)
        else:
            def base(context: np.ndarray, period: int, horizon: int) -> QuantileForecast:
                return seasonal_naive(context, period, horizon)

        def ridge_forecaster(sample: TimeSeriesSample) -> QuantileForecast:
            model = fit_in_context(sample, ev.ridge_lambda)
            return in_context_forecast(model, sample, base)

        return ridge_forecaster

    raise ConfigError(f"unknown forecast method {method!r}; options: {FORECAST_METHODS}")


def score_corpus(samples: list[TimeSeriesSample], forecaster: Forecaster) -> dict[str, float]:
    """Mean WQL and MASE over single-origin tasks at each sample's split."""
    wqls, mases = [], []
    for sample in samples:
        T, h = sample.context_length, sample.horizon
        fc = forecaster(sample)
        truth = np.asarray(sample.target[T : T + h])
        wqls.append(wql(fc.values, truth, fc.levels))
        mases.append(mase(fc.median, truth, np.asarray(sample.target[:T]), sample.period))
    return {"wql": float(np.mean(wqls)), "mase": float(np.mean(mases))}


# ---------------------------------------------------------------------------
# studies


def run_ablation(
    seed: int,
    *,
    aug_config: AugmentationConfig | None = None,
    model_config: ModelConfig | None = None,
    train_config: TrainConfig | None = None,
    eval_config: EvalConfig | None = None,
    corpus_size: int = 5000,
    eval_size: int = 500,
    context_length: int = 128,
    horizon: int = 32,
    return_artifacts: bool = False,
):
    """Train augmented vs. unaugmented variants and score the 2x2 grid
    (training variant x covariate access at inference)."""
    aug = aug_config or AugmentationConfig()
    model_cfg = model_config or ModelConfig()
    train_cfg = train_config or TrainConfig()
    ev = eval_config or EvalConfig()

    eval_samples = make_impact_eval_corpus(
        eval_size, context_length, horizon, seed,
        n_covariates=1, context_events=6, horizon_event_prob=1.0,
    )

    results: dict[str, dict[str, float]] = {}
    final_losses: dict[str, float] = {}
    artifacts: dict[str, Params] = {}
    for variant, informative in (("augmented", True), ("unaugmented", False)):
        corpus = make_training_corpus(corpus_size, context_length, horizon,
                                      aug, seed, informative=informative)
        params = init_params(model_cfg, substream(seed, "init"))
        outcome = train(params, corpus, model_cfg, train_cfg, substream(seed, "train"))
        final_losses[variant] = float(np.mean(outcome.losses[-50:]))
        artifacts[variant] = params

        with_cov = score_corpus(eval_samples, make_forecaster(
            "transformer", params=params, model_config=model_cfg, eval_config=ev))
        without = score_corpus(eval_samples, make_forecaster(
            "transformer-nocov", params=params, model_config=model_cfg, eval_config=ev))
        results[variant] = {
            "wql_with_covariates": with_cov["wql"],
            "wql_without_covariates": without["wql"],
            "mase_with_covariates": with_cov["mase"],
            "mase_without_covariates": without["mase"],
            "wql_ratio": with_cov["wql"] / without["wql"],
        }

    report = {
        "study": "ablation",
        "seed": seed,
        "sizes": {
            "corpus_size": corpus_size,
            "eval_size": eval_size,
            "context_length": context_length,
            "horizon": horizon,
        },
        "config": config_to_dict(aug, model_cfg, train_cfg, ev),
        "final_train_loss": final_losses,
        "results": results,
    }
    if return_artifacts:
        return report, artifacts
    return report


def run_impact_sensitivity(
    seed: int,
    models: dict[str, Forecaster],
    *,
    event_counts: tuple[int, ...] = (0, 1, 2, 4, 8),
    n_covariates: tuple[int, ...] = (1,),
    lag_mode: str = "fixed0",
    samples_per_cell: int = 200,
    context_length: int = 128,
    horizon: int = 32,
    impact_amplitude: float = 2.0,
) -> dict:
    """Score every model on a grid of (context event count, covariate count).

    Cells share base targets and horizon events (common random numbers), so
    score differences across event counts isolate the context evidence.
    """
    cells = []
    for n_cov in n_covariates:
        for events in event_counts:
            samples = make_impact_eval_corpus(
                samples_per_cell, context_length, horizon, seed,
                n_covariates=n_cov, context_events=events,
                horizon_event_prob=1.0 / n_cov,
                impact_amplitude=impact_amplitude, lag_mode=lag_mode,
            )
            scores = {name: score_corpus(samples, forecaster)["wql"]
                      for name, forecaster in models.items()}
            cells.append({
                "context_events": events,
                "n_covariates": n_cov,
                "scores": scores,
            })
    return {
        "study": "impact-sensitivity",
        "seed": seed,
        "lag_mode": lag_mode,
        "samples_per_cell": samples_per_cell,
        "sizes": {
            "context_length": context_length,
            "horizon": horizon,
            "impact_amplitude": impact_amplitude,
        },
        "event_counts": list(event_counts),
        "n_covariates": list(n_covariates),
        "models": list(models),
        "cells": cells,
    }


def ablation_csv_rows(report: dict) -> list[dict]:
    rows = []
    for variant, metrics in report["results"].items():
        for key, value in metrics.items():
            rows.append({"variant": variant, "metric": key, "value": value})
    return rows


def sensitivity_csv_rows(report: dict) -> list[dict]:
    rows = []
    for cell in report["cells"]:
        for model, score in cell["scores"].items():
            rows.append({
                "context_events": cell["context_events"],
                "n_covariates": cell["n_covariates"],
                "model": model,
                "wql": score,
            })
    return rows
