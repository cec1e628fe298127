"""Synthetic covariate signals: step or bell-shaped events plus a
changepoint trend.

A generated signal is the sum of an event component (either a step signal
alternating between 0 and a sampled amplitude at the event positions, or a
sum of scaled Gaussian bumps) and a piecewise-linear trend interpolated
through randomly placed changepoints.
"""

from __future__ import annotations

import numpy as np

from .config import SynthGenConfig  # noqa: F401  (re-export)
from .errors import ValidationError


def step_event_signal(positions: np.ndarray, amplitude: float, length: int) -> np.ndarray:
    """Signal that flips between 0 and ``amplitude`` at each event position."""
    t = np.arange(length, dtype=np.float64)
    flips = (t[:, None] >= np.asarray(positions)[None, :]).sum(axis=1)
    return np.where(flips % 2 == 1, amplitude, 0.0)


def gauss_event_signal(
    positions: np.ndarray,
    amplitudes: np.ndarray,
    widths: np.ndarray,
    length: int,
) -> np.ndarray:
    """Sum of Gaussian bumps ``a_i * exp(-(t - p_i)^2 / (2 s_i^2))``."""
    t = np.arange(length, dtype=np.float64)
    out = np.zeros(length, dtype=np.float64)
    for p, a, s in zip(positions, amplitudes, widths):
        out += a * np.exp(-((t - p) ** 2) / (2.0 * s**2))
    return out


def trend_signal(positions: np.ndarray, amplitudes: np.ndarray, length: int) -> np.ndarray:
    """Piecewise-linear interpolation through changepoints.

    ``amplitudes`` has two more entries than ``positions``: the first and
    last anchor the endpoints t=0 and t=length, the rest pair with the
    positions sorted in time order.
    """
    positions = np.asarray(positions, dtype=np.float64)
    amplitudes = np.asarray(amplitudes, dtype=np.float64)
    if len(amplitudes) != len(positions) + 2:
        raise ValidationError("need len(positions) + 2 amplitudes")
    order = np.argsort(positions, kind="stable")
    xp = np.concatenate(([0.0], positions[order], [float(length)]))
    fp = np.concatenate(([amplitudes[0]], amplitudes[1:-1][order], [amplitudes[-1]]))
    return np.interp(np.arange(length, dtype=np.float64), xp, fp)


def generate_synthetic_covariate(
    length: int, config: SynthGenConfig, rng: np.random.Generator
) -> np.ndarray:
    """Draw one synthetic covariate of the given length.

    Event count is uniform on {1, ..., max_events}, positions are uniform on
    [0, length), and the event type (step or gauss) is a fair coin. The
    trend uses a uniform changepoint count on {0, ..., max_changepoints}
    with N(0, changepoint_std) amplitudes.
    """
    if length < 2:
        raise ValidationError(f"covariate length must be >= 2, got {length}")
    config.validate()

    n_events = int(rng.integers(1, config.max_events + 1))
    positions = rng.uniform(0.0, length, size=n_events)
    use_gauss = bool(rng.integers(0, 2))
    if use_gauss:
        amplitudes = rng.normal(0.0, config.amplitude_std, size=n_events)
        lo, hi = config.bell_width_range
        widths = rng.uniform(lo * length, hi * length, size=n_events)
        events = gauss_event_signal(positions, amplitudes, widths, length)
    else:
        amplitude = rng.normal(0.0, config.amplitude_std)
        events = step_event_signal(positions, amplitude, length)

    n_changepoints = int(rng.integers(0, config.max_changepoints + 1))
    cp_positions = rng.uniform(0.0, length, size=n_changepoints + 1)
    cp_amplitudes = rng.normal(0.0, config.changepoint_std, size=n_changepoints + 3)
    trend = trend_signal(cp_positions, cp_amplitudes, length)

    return events + trend
