"""Per-series z-score scaling and patching with padding masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

STD_FLOOR = 1e-10


@dataclass(frozen=True)
class ScalerState:
    """Mean and population standard deviation of one series."""

    mean: float
    std: float


@dataclass
class PatchGrid:
    """A series split into non-overlapping, left-padded windows."""

    patch_length: int
    patches: np.ndarray     # (n_patches, patch_length)
    mask: np.ndarray        # (n_patches, patch_length), True = observed
    time_index: np.ndarray  # (n_patches,), increasing left to right
    pad: int                # number of padded positions at the front


def fit_scaler(values: np.ndarray, mask: np.ndarray | None = None) -> ScalerState:
    """Fit mean/std over the observed entries of ``values``.

    Uses the population standard deviation. A std below ``STD_FLOOR``
    (constant series, or a single observation) is replaced by 1.0 so that
    normalization stays well defined.
    """
    values = np.asarray(values, dtype=np.float64)
    if mask is None:
        observed = values
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != values.shape:
            raise ValidationError("mask shape does not match values")
        observed = values[mask]
    if observed.size == 0:
        raise ValidationError("cannot fit scaler: no observed values")
    mean = float(observed.mean())
    std = float(observed.std())
    if std < STD_FLOOR:
        std = 1.0
    return ScalerState(mean=mean, std=std)


def normalize(values: np.ndarray, scaler: ScalerState) -> np.ndarray:
    return (np.asarray(values, dtype=np.float64) - scaler.mean) / scaler.std


def denormalize(values: np.ndarray, scaler: ScalerState) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) * scaler.std + scaler.mean


def patchify(values: np.ndarray, mask: np.ndarray | None, patch_length: int) -> PatchGrid:
    """Left-pad ``values`` with masked zeros to a multiple of ``patch_length``
    and split into non-overlapping windows.

    Masked input positions are zeroed so that every unobserved slot carries
    the value 0.
    """
    if patch_length < 1:
        raise ValidationError("patch_length must be >= 1")
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    if mask is None:
        mask = np.ones(n, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
    n_patches = max(1, -(-n // patch_length)) if n > 0 else 0
    total = n_patches * patch_length
    pad = total - n
    padded_values = np.zeros(total, dtype=np.float64)
    padded_mask = np.zeros(total, dtype=bool)
    padded_values[pad:] = np.where(mask, values, 0.0)
    padded_mask[pad:] = mask
    return PatchGrid(
        patch_length=patch_length,
        patches=padded_values.reshape(n_patches, patch_length),
        mask=padded_mask.reshape(n_patches, patch_length),
        time_index=np.arange(n_patches, dtype=np.int64),
        pad=pad,
    )


def unpatchify(grid: PatchGrid) -> tuple[np.ndarray, np.ndarray]:
    """Concatenate patches and drop the front padding; inverse of patchify."""
    values = grid.patches.reshape(-1)[grid.pad:]
    mask = grid.mask.reshape(-1)[grid.pad:]
    return values, mask
