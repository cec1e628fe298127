"""Configuration dataclasses and the flat ``key = value`` config file format.

Config files are UTF-8 text with one ``section.key = value`` assignment per
line and ``#`` comments. Keys not listed below are rejected, as are values
outside their documented ranges; anything omitted falls back to the default.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError

QUANTILE_LEVELS: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass
class SynthGenConfig:
    """Parameters of the synthetic covariate generator."""

    max_events: int = 20
    max_changepoints: int = 8
    changepoint_std: float = 2.0
    # Gaussian bump widths as fractions of the series length.
    bell_width_range: tuple[float, float] = (0.01, 0.10)
    amplitude_std: float = 1.0

    def validate(self) -> None:
        if self.max_events < 1:
            raise ConfigError("max_events must be >= 1")
        if self.max_changepoints < 0:
            raise ConfigError("max_changepoints must be >= 0")
        if self.changepoint_std <= 0:
            raise ConfigError("changepoint_std must be > 0")
        lo, hi = self.bell_width_range
        if not (0 < lo <= hi):
            raise ConfigError("bell_width_range must be positive and ordered")
        if self.amplitude_std <= 0:
            raise ConfigError("amplitude_std must be > 0")


@dataclass
class AugmentationConfig:
    """Sampling distributions of the covariate augmentation pipeline."""

    covariate_count_p: float = 0.25   # geometric parameter of the covariate count
    no_impact_prob: float = 0.2       # probability a covariate has zero impact
    no_gate_prob: float = 0.15        # probability an impact applies on the full domain
    max_covariates: int = 10
    lag_count_p: float = 0.85         # geometric parameter, active-lag count on {1,2,...}
    lag_position_p: float = 0.15      # geometric parameter, lag positions on {0,1,...}
    max_lag: int = 500
    noise_scale: float = 0.02         # impact-noise variance as a fraction of impact variance
    synth_fraction: float = 0.5       # probability a covariate is synthetic vs. a corpus window
    past_only_prob: float = 0.5       # probability a drawn covariate is demoted to past-only
    synth: SynthGenConfig = field(default_factory=SynthGenConfig)

    def validate(self) -> None:
        for name in ("covariate_count_p", "no_impact_prob", "no_gate_prob",
                     "lag_count_p", "lag_position_p"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ConfigError(f"{name} must lie strictly in (0, 1), got {v}")
        for name in ("synth_fraction", "past_only_prob"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.max_covariates < 1:
            raise ConfigError("max_covariates must be >= 1")
        if self.max_lag < 0:
            raise ConfigError("max_lag must be >= 0")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be >= 0")
        self.synth.validate()


@dataclass
class ModelConfig:
    """Architecture sizes of the patched encoder-decoder forecaster."""

    d_model: int = 64
    n_layers_enc: int = 2
    n_layers_dec: int = 2
    n_heads: int = 4
    d_ff: int = 128
    input_patch_len: int = 32
    output_patch_len: int = 64
    quantile_levels: tuple[float, ...] = QUANTILE_LEVELS
    max_time_positions: int = 64
    max_covariates: int = 16

    def validate(self) -> None:
        for name in ("d_model", "n_layers_enc", "n_layers_dec", "n_heads", "d_ff",
                     "input_patch_len", "output_patch_len", "max_time_positions",
                     "max_covariates"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        # Rotary encoding pairs dimensions within each head.
        if self.d_model % (2 * self.n_heads) != 0:
            raise ConfigError(
                f"d_model ({self.d_model}) must be divisible by 2*n_heads "
                f"({2 * self.n_heads})"
            )
        levels = self.quantile_levels
        if len(levels) < 1 or any(not (0.0 < q < 1.0) for q in levels):
            raise ConfigError("quantile levels must lie in (0, 1)")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ConfigError("quantile levels must be strictly increasing")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


@dataclass
class TrainConfig:
    """Optimizer and schedule settings."""

    steps: int = 2000
    batch_size: int = 32
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    warmup_frac: float = 0.05

    def validate(self) -> None:
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if not (0.0 <= self.warmup_frac < 1.0):
            raise ConfigError("warmup_frac must lie in [0, 1)")


@dataclass
class EvalConfig:
    """Evaluation protocol settings."""

    horizon_periods: tuple[int, ...] = (1, 2)
    ridge_lambda: float = 1.0
    sort_quantiles: bool = True

    def validate(self) -> None:
        if len(self.horizon_periods) < 1 or any(p < 1 for p in self.horizon_periods):
            raise ConfigError("horizon_periods must be positive integers")
        if self.ridge_lambda < 0:
            raise ConfigError("ridge_lambda must be >= 0")


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(part.strip()) for part in text.split(",") if part.strip())


# key -> (target object selector, attribute, converter)
def _key_table(aug: AugmentationConfig, model: ModelConfig,
               train: TrainConfig, ev: EvalConfig) -> dict:
    table = {}
    for attr, conv in [
        ("covariate_count_p", float), ("no_impact_prob", float),
        ("no_gate_prob", float), ("max_covariates", int),
        ("lag_count_p", float), ("lag_position_p", float),
        ("max_lag", int), ("noise_scale", float),
        ("synth_fraction", float), ("past_only_prob", float),
    ]:
        table[f"augment.{attr}"] = (aug, attr, conv)
    for attr, conv in [
        ("max_events", int), ("max_changepoints", int),
        ("changepoint_std", float), ("amplitude_std", float),
    ]:
        table[f"augment.{attr}"] = (aug.synth, attr, conv)
    for attr, conv in [
        ("d_model", int), ("n_layers_enc", int), ("n_layers_dec", int),
        ("n_heads", int), ("d_ff", int), ("input_patch_len", int),
        ("output_patch_len", int), ("max_time_positions", int),
        ("max_covariates", int),
    ]:
        table[f"model.{attr}"] = (model, attr, conv)
    for attr, conv in [
        ("steps", int), ("batch_size", int), ("learning_rate", float),
        ("weight_decay", float), ("warmup_frac", float),
    ]:
        table[f"train.{attr}"] = (train, attr, conv)
    table["eval.horizon_periods"] = (ev, "horizon_periods", _parse_int_tuple)
    table["eval.ridge_lambda"] = (ev, "ridge_lambda", float)
    table["eval.sort_quantiles"] = (ev, "sort_quantiles", _parse_bool)
    return table


def parse_config_text(
    text: str,
) -> tuple[AugmentationConfig, ModelConfig, TrainConfig, EvalConfig]:
    """Parse config text into the four config objects, applying defaults."""
    aug = AugmentationConfig()
    model = ModelConfig()
    train = TrainConfig()
    ev = EvalConfig()
    table = _key_table(aug, model, train, ev)
    bell_lo, bell_hi = aug.synth.bell_width_range

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        # bell_width_range is exposed as a min/max key pair
        if key == "augment.bell_width_min":
            bell_lo = float(value)
            continue
        if key == "augment.bell_width_max":
            bell_hi = float(value)
            continue
        if key not in table:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        obj, attr, conv = table[key]
        try:
            setattr(obj, attr, conv(value))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc

    aug.synth.bell_width_range = (bell_lo, bell_hi)
    aug.validate()
    model.validate()
    train.validate()
    ev.validate()
    return aug, model, train, ev


def config_to_dict(aug: AugmentationConfig, model: ModelConfig,
                   train: TrainConfig, ev: EvalConfig) -> dict:
    """Resolved configuration as a JSON-ready dict (for report provenance)."""
    return {
        "augment": {
            "covariate_count_p": aug.covariate_count_p,
            "no_impact_prob": aug.no_impact_prob,
            "no_gate_prob": aug.no_gate_prob,
            "max_covariates": aug.max_covariates,
            "lag_count_p": aug.lag_count_p,
            "lag_position_p": aug.lag_position_p,
            "max_lag": aug.max_lag,
            "noise_scale": aug.noise_scale,
            "synth_fraction": aug.synth_fraction,
            "past_only_prob": aug.past_only_prob,
            "max_events": aug.synth.max_events,
            "max_changepoints": aug.synth.max_changepoints,
            "changepoint_std": aug.synth.changepoint_std,
            "bell_width_min": aug.synth.bell_width_range[0],
            "bell_width_max": aug.synth.bell_width_range[1],
            "amplitude_std": aug.synth.amplitude_std,
        },
        "model": {
            "d_model": model.d_model,
            "n_layers_enc": model.n_layers_enc,
            "n_layers_dec": model.n_layers_dec,
            "n_heads": model.n_heads,
            "d_ff": model.d_ff,
            "input_patch_len": model.input_patch_len,
            "output_patch_len": model.output_patch_len,
            "quantile_levels": list(model.quantile_levels),
            "max_time_positions": model.max_time_positions,
            "max_covariates": model.max_covariates,
        },
        "train": {
            "steps": train.steps,
            "batch_size": train.batch_size,
            "learning_rate": train.learning_rate,
            "weight_decay": train.weight_decay,
            "warmup_frac": train.warmup_frac,
        },
        "eval": {
            "horizon_periods": list(ev.horizon_periods),
            "ridge_lambda": ev.ridge_lambda,
            "sort_quantiles": ev.sort_quantiles,
        },
    }
