"""Informative covariate augmentation.

Attaches sampled covariates to a target series and perturbs the target by
sparse lagged linear impact functions, so that the covariates carry real
predictive value for the augmented target. Covariates come either from a
corpus of existing series (random z-normalized windows) or from the
synthetic generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import AugmentationConfig, SynthGenConfig  # noqa: F401  (re-export)
from .dataio import Covariate, TimeSeriesSample
from .errors import ConfigError, ValidationError
from .preprocess import fit_scaler, normalize
from .synthgen import generate_synthetic_covariate

VARIABLE_TARGET = "target"
VARIABLE_COVARIATE = "covariate"
RELATION_GREATER = "greater"
RELATION_LESS = "less"


@dataclass(frozen=True)
class ActiveSetRule:
    """Quantile-threshold rule selecting the timesteps where an impact acts."""

    variable: str        # "target" or "covariate"
    relation: str        # "greater" or "less"
    quantile_level: float

    def is_full_domain(self) -> bool:
        return (
            self.variable == VARIABLE_TARGET
            and self.relation == RELATION_GREATER
            and self.quantile_level == 0.0
        )


FULL_DOMAIN_RULE = ActiveSetRule(VARIABLE_TARGET, RELATION_GREATER, 0.0)


@dataclass
class ImpactFunction:
    """Sparse lagged linear map from a covariate to an additive target impact."""

    bias: float
    lag_coefficients: dict[int, float]  # lag -> coefficient, lags in [0, max_lag]
    rule: ActiveSetRule = FULL_DOMAIN_RULE
    noise_scale: float = 0.0

    def is_zero(self) -> bool:
        return self.bias == 0.0 and not self.lag_coefficients


def sample_covariate_count(config: AugmentationConfig, rng: np.random.Generator) -> int:
    """Covariate count: geometric on {0, 1, ...} capped at max_covariates."""
    kappa = int(rng.geometric(config.covariate_count_p)) - 1
    return min(kappa, config.max_covariates)


def truncated_count_mean(p: float, k_max: int) -> float:
    """Exact E[min(kappa, k_max)] for kappa ~ Geom(p) on {0, 1, ...}."""
    mean = sum(j * p * (1.0 - p) ** j for j in range(k_max))
    return mean + k_max * (1.0 - p) ** k_max


def sample_impact_function(
    config: AugmentationConfig, rng: np.random.Generator
) -> ImpactFunction:
    """Draw one impact function.

    With probability ``no_impact_prob`` the function is identically zero.
    Otherwise the active-lag count is geometric on {1, 2, ...}, lag positions
    are geometric on {0, 1, ...} clamped to ``max_lag`` and merged as a set,
    and coefficients are standard normal. The active-set gate is itself
    sampled unless a second coin (probability ``no_gate_prob``) keeps the
    impact on the full domain with zero bias.
    """
    coefficients: dict[int, float] = {}
    bias = 0.0
    rule = FULL_DOMAIN_RULE

    if rng.uniform() > config.no_impact_prob:
        n_lags = int(rng.geometric(config.lag_count_p))
        lags = [min(int(rng.geometric(config.lag_position_p)) - 1, config.max_lag)
                for _ in range(n_lags)]
        values = rng.normal(0.0, 1.0, size=n_lags)
        for lag, value in zip(lags, values):
            coefficients[lag] = float(value)
        if rng.uniform() > config.no_gate_prob:
            bias = float(rng.normal(0.0, 1.0))
            variable = VARIABLE_TARGET if rng.integers(0, 2) == 0 else VARIABLE_COVARIATE
            relation = RELATION_GREATER if rng.integers(0, 2) == 0 else RELATION_LESS
            rule = ActiveSetRule(variable, relation, float(rng.uniform()))

    return ImpactFunction(
        bias=bias,
        lag_coefficients=coefficients,
        rule=rule,
        noise_scale=config.noise_scale,
    )


def empirical_quantile(values: np.ndarray, q: float) -> float:
    """Nearest-rank quantile: smallest element with cumulative fraction >= q."""
    values = np.sort(np.asarray(values, dtype=np.float64))
    n = values.shape[0]
    if n == 0:
        raise ValidationError("quantile of empty sequence")
    rank = max(int(np.ceil(q * n)), 1)
    return float(values[rank - 1])


def active_set(rule: ActiveSetRule, target: np.ndarray, covariate: np.ndarray) -> np.ndarray:
    """Boolean mask of active timesteps under ``rule``.

    The full-domain rule activates every timestep; sampled rules compare the
    chosen sequence against its nearest-rank empirical quantile strictly.
    """
    target = np.asarray(target, dtype=np.float64)
    if rule.is_full_domain():
        return np.ones(target.shape[0], dtype=bool)
    chosen = target if rule.variable == VARIABLE_TARGET else np.asarray(covariate, dtype=np.float64)
    threshold = empirical_quantile(chosen, rule.quantile_level)
    if rule.relation == RELATION_GREATER:
        return chosen > threshold
    return chosen < threshold


def compute_impact(
    fn: ImpactFunction,
    target: np.ndarray,
    covariate: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Impact series over the target's timeline.

    ``covariate`` may carry leading history (its last ``len(target)`` values
    align with the target); lags reaching before the available history are
    zero-filled. Noise is Gaussian with variance ``noise_scale`` times the
    variance of the deterministic impact over the active set, drawn only on
    active timesteps.
    """
    target = np.asarray(target, dtype=np.float64)
    covariate = np.asarray(covariate, dtype=np.float64)
    n = target.shape[0]
    lead = covariate.shape[0] - n
    if lead < 0:
        raise ValidationError("covariate shorter than target timeline")

    deterministic = np.full(n, fn.bias, dtype=np.float64)
    timeline = np.arange(n)
    for lag, coef in fn.lag_coefficients.items():
        src = lead + timeline - lag
        valid = src >= 0
        deterministic[valid] += coef * covariate[src[valid]]

    active = active_set(fn.rule, target, covariate[lead:])
    impact = np.where(active, deterministic, 0.0)

    if fn.noise_scale > 0.0 and active.any():
        variance = float(deterministic[active].var())
        if variance > 0.0:
            noise = rng.normal(0.0, np.sqrt(fn.noise_scale * variance), size=int(active.sum()))
            impact[active] += noise
    return impact


@dataclass
class CovariatePool:
    """Covariate source: corpus series to window, plus the synthetic generator."""

    corpus: list[np.ndarray] = field(default_factory=list)
    synth: SynthGenConfig = field(default_factory=SynthGenConfig)


def draw_covariate(
    pool: CovariatePool,
    length: int,
    max_lag: int,
    synth_fraction: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw one z-normalized covariate covering ``length`` steps.

    Corpus windows keep up to ``max_lag`` real leading values as history;
    synthetic draws have none. The returned array has ``lead + length``
    entries with the last ``length`` aligned to the target timeline.
    """
    if rng.uniform() < synth_fraction:
        window = generate_synthetic_covariate(length, pool.synth, rng)
        scaler = fit_scaler(window)
        return normalize(window, scaler)

    eligible = [s for s in pool.corpus if len(s) >= length]
    if not eligible:
        raise ConfigError(
            "covariate pool has no corpus series of sufficient length "
            f"({length}) and synth_fraction < 1"
        )
    series = eligible[int(rng.integers(0, len(eligible)))]
    start = int(rng.integers(0, len(series) - length + 1))
    lead = min(start, max_lag)
    window = series[start : start + length]
    scaler = fit_scaler(window)
    return normalize(series[start - lead : start + length], scaler)


def augment_sample(
    target: np.ndarray,
    pool: CovariatePool,
    config: AugmentationConfig,
    rng: np.random.Generator,
    *,
    context_length: int,
    sample_id: str = "aug",
    period: int = 1,
    apply_impact: bool = True,
) -> TimeSeriesSample:
    """Build one augmented training sample from a normalized target.

    Draws k covariates and k impact functions, adds the impacts to the
    target, and attaches the covariates (each independently demoted to
    past-only with probability ``past_only_prob``). With
    ``apply_impact=False`` all draws still happen, so the attached
    covariates are identical, but the target is left unperturbed.
    """
    target = np.asarray(target, dtype=np.float64)
    total = target.shape[0]
    horizon = total - context_length
    if horizon < 1:
        raise ValidationError("target must extend past the context")
    if config.synth_fraction < 1.0 and not pool.corpus:
        raise ConfigError("covariate pool is empty and synth_fraction < 1")

    k = sample_covariate_count(config, rng)
    covariates = [
        draw_covariate(pool, total, config.max_lag, config.synth_fraction, rng)
        for _ in range(k)
    ]
    impacts = [sample_impact_function(config, rng) for _ in range(k)]

    augmented = target.copy()
    for cov, fn in zip(covariates, impacts):
        impact = compute_impact(fn, target, cov, rng)
        if apply_impact:
            augmented = augmented + impact

    attached: dict[str, Covariate] = {}
    for i, cov in enumerate(covariates):
        if rng.uniform() < config.past_only_prob:
            # The impact above used the full window; the stored covariate
            # keeps only the part known at the forecast origin.
            attached[f"cov{i + 1}"] = Covariate(kind="past_only", values=cov[: len(cov) - horizon])
        else:
            attached[f"cov{i + 1}"] = Covariate(kind="past_and_future", values=cov)

    return TimeSeriesSample(
        id=sample_id,
        target=augmented,
        context_length=context_length,
        horizon=horizon,
        covariates=attached,
        period=period,
    )
