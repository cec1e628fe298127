"""On-disk corpus and forecast formats, domain types, and config loading.

Corpus files are JSON lines, one sample per line:

    {"id": str, "period": int, "context_length": int, "horizon": int,
     "target": [num, ...], "missing_mask": [bool, ...]?,
     "covariates": {name: {"kind": "past_and_future"|"past_only",
                           "values": [num, ...]}}}

Forecast files are JSON lines of:

    {"sample_id": str, "origin": int, "levels": [num x 9],
     "values": [[num x 9] x h]}

Numbers round-trip bit-exactly (shortest decimal representation that parses
back equal). Covariate arrays may carry extra leading values: they end-align
with the covariate's known span ([0, T+h) for past-and-future, [0, T) for
past-only), and the surplus front is pre-history usable for lagged impacts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import (  # noqa: F401  (re-exported: spec'd config entry point)
    QUANTILE_LEVELS,
    AugmentationConfig,
    EvalConfig,
    ModelConfig,
    SynthGenConfig,
    TrainConfig,
    parse_config_text,
)
from .errors import CorpusFormatError, ValidationError

COVARIATE_KINDS = ("past_and_future", "past_only")


@dataclass
class Covariate:
    kind: str
    values: np.ndarray


@dataclass
class TimeSeriesSample:
    """One target series with named covariates and a split point.

    ``target`` holds at least ``context_length + horizon`` values (history
    plus future truth). ``missing_mask`` is aligned to ``target`` with True
    marking observed entries; None means fully observed.
    """

    id: str
    target: np.ndarray
    context_length: int
    horizon: int
    covariates: dict[str, Covariate] = field(default_factory=dict)
    period: int = 1
    missing_mask: np.ndarray | None = None

    def observed_mask(self) -> np.ndarray:
        if self.missing_mask is None:
            return np.ones(len(self.target), dtype=bool)
        return self.missing_mask

    def covariate_known_span(self, cov: Covariate) -> int:
        """Number of timeline steps [0, span) over which ``cov`` is known."""
        if cov.kind == "past_and_future":
            return self.context_length + self.horizon
        return self.context_length

    def covariate_lead(self, cov: Covariate) -> int:
        """Length of the pre-history segment in front of the known span."""
        return len(cov.values) - self.covariate_known_span(cov)


@dataclass
class ForecastRecord:
    sample_id: str
    origin: int
    levels: tuple[float, ...]
    values: np.ndarray  # (h, len(levels)), original target scale


@dataclass
class QuantileForecast:
    """Per-timestep forecast values at fixed quantile levels."""

    levels: tuple[float, ...]
    values: np.ndarray  # (h, len(levels))

    @property
    def median(self) -> np.ndarray:
        idx = self.levels.index(0.5) if 0.5 in self.levels else len(self.levels) // 2
        return self.values[:, idx]


def validate_sample(sample: TimeSeriesSample) -> None:
    """Check every TimeSeriesSample invariant; raise naming sample and field."""
    sid = sample.id

    def bad(fieldname: str, msg: str) -> ValidationError:
        return ValidationError(f"sample {sid!r}: {fieldname}: {msg}")

    if sample.context_length < 1:
        raise bad("context_length", "must be >= 1")
    if sample.horizon < 1:
        raise bad("horizon", "must be >= 1")
    if sample.period < 1:
        raise bad("period", "must be >= 1")
    total = sample.context_length + sample.horizon
    if len(sample.target) < total:
        raise bad("target", f"length {len(sample.target)} < context_length + horizon = {total}")
    if not np.all(np.isfinite(sample.target)):
        raise bad("target", "contains non-finite values")
    if sample.missing_mask is not None and len(sample.missing_mask) != len(sample.target):
        raise bad("missing_mask", "length does not match target")
    for name, cov in sample.covariates.items():
        if cov.kind not in COVARIATE_KINDS:
            raise bad(f"covariates[{name!r}].kind", f"unknown kind {cov.kind!r}")
        needed = sample.covariate_known_span(cov)
        if len(cov.values) < needed:
            raise bad(
                f"covariates[{name!r}]",
                f"length {len(cov.values)} < required {needed} for kind {cov.kind}",
            )
        if not np.all(np.isfinite(cov.values)):
            raise bad(f"covariates[{name!r}]", "contains non-finite values")


def _sample_from_obj(obj: dict, lineno: int) -> TimeSeriesSample:
    try:
        covs: dict[str, Covariate] = {}
        for name, spec in obj.get("covariates", {}).items():
            covs[name] = Covariate(
                kind=spec["kind"],
                values=np.asarray(spec["values"], dtype=np.float64),
            )
        mask = obj.get("missing_mask")
        return TimeSeriesSample(
            id=obj["id"],
            target=np.asarray(obj["target"], dtype=np.float64),
            context_length=int(obj["context_length"]),
            horizon=int(obj["horizon"]),
            covariates=covs,
            period=int(obj.get("period", 1)),
            missing_mask=None if mask is None else np.asarray(mask, dtype=bool),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusFormatError(f"line {lineno}: malformed record: {exc}") from exc


def load_corpus(path: str | Path) -> list[TimeSeriesSample]:
    """Load and validate a JSON-lines corpus, preserving file order."""
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"line {lineno}: invalid JSON: {exc}") from exc
            sample = _sample_from_obj(obj, lineno)
            validate_sample(sample)
            samples.append(sample)
    return samples


def _sample_to_obj(sample: TimeSeriesSample) -> dict:
    obj: dict = {
        "id": sample.id,
        "period": sample.period,
        "context_length": sample.context_length,
        "horizon": sample.horizon,
        "target": [float(v) for v in sample.target],
    }
    if sample.missing_mask is not None:
        obj["missing_mask"] = [bool(v) for v in sample.missing_mask]
    obj["covariates"] = {
        name: {"kind": cov.kind, "values": [float(v) for v in cov.values]}
        for name, cov in sample.covariates.items()
    }
    return obj


def save_corpus(samples: list[TimeSeriesSample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            validate_sample(sample)
            fh.write(json.dumps(_sample_to_obj(sample), allow_nan=False))
            fh.write("\n")


def validate_forecast(record: ForecastRecord) -> None:
    levels = record.levels
    if len(levels) != 9:
        raise ValidationError(f"forecast {record.sample_id!r}: expected 9 levels, got {len(levels)}")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValidationError(f"forecast {record.sample_id!r}: levels must be strictly increasing")
    values = np.asarray(record.values)
    if values.ndim != 2 or values.shape[1] != len(levels):
        raise ValidationError(f"forecast {record.sample_id!r}: values must be h x {len(levels)}")
    if not np.all(np.isfinite(values)):
        raise ValidationError(f"forecast {record.sample_id!r}: non-finite values")


def save_forecasts(records: list[ForecastRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            validate_forecast(record)
            obj = {
                "sample_id": record.sample_id,
                "origin": record.origin,
                "levels": [float(q) for q in record.levels],
                "values": [[float(v) for v in row] for row in record.values],
            }
            fh.write(json.dumps(obj, allow_nan=False))
            fh.write("\n")


def load_forecasts(path: str | Path) -> list[ForecastRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                record = ForecastRecord(
                    sample_id=obj["sample_id"],
                    origin=int(obj["origin"]),
                    levels=tuple(float(q) for q in obj["levels"]),
                    values=np.asarray(obj["values"], dtype=np.float64),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorpusFormatError(f"line {lineno}: malformed forecast: {exc}") from exc
            validate_forecast(record)
            records.append(record)
    return records


def load_config(path: str | Path) -> tuple[AugmentationConfig, ModelConfig, TrainConfig, EvalConfig]:
    """Load the four config sections from a flat key=value file."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_config_text(text)
