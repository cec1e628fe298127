"""Patched encoder-decoder quantile forecaster.

Input layer: each variate is instance-normalized, split into non-overlapping
patches, and embedded by a shared two-layer residual block operating on the
patch values concatenated with their padding mask. Patch embeddings receive
a learned additive time embedding; a learned separation token precedes each
variate (one kind for covariates, one for the target). The encoder
self-attends over the token sequence with rotary position encoding; the
decoder runs one learned query token per forecast patch with self- and
cross-attention, and a residual block maps each decoder token to the
quantile values of its output patch.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ModelConfig  # noqa: F401  (re-export)
from .dataio import QuantileForecast, TimeSeriesSample
from .errors import NonFiniteError, TokenBudgetError, ValidationError
from .preprocess import ScalerState, fit_scaler, patchify

ROTARY_BASE = 10000.0
RMS_EPS = 1e-6

Params = dict[str, Tensor]


# ---------------------------------------------------------------------------
# parameters


def init_params(config: ModelConfig, rng: np.random.Generator,
                dtype=np.float32) -> Params:
    """Initialize the flat named-parameter store."""
    config.validate()
    d = config.d_model
    d_ff = config.d_ff
    n_q = len(config.quantile_levels)
    out_dim = config.output_patch_len * n_q
    params: Params = {}

    def weight(name: str, shape: tuple[int, ...], scale: float | None = None):
        fan_in = shape[0] if len(shape) > 1 else shape[0]
        std = scale if scale is not None else 1.0 / np.sqrt(fan_in)
        params[name] = Tensor(rng.normal(0.0, std, size=shape).astype(dtype),
                              requires_grad=True)

    def zeros(name: str, shape: tuple[int, ...]):
        params[name] = Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)

    def ones(name: str, shape: tuple[int, ...]):
        params[name] = Tensor(np.ones(shape, dtype=dtype), requires_grad=True)

    weight("input_rb.w1", (2 * config.input_patch_len, d_ff))
    zeros("input_rb.b1", (d_ff,))
    weight("input_rb.w2", (d_ff, d))
    zeros("input_rb.b2", (d,))
    weight("input_rb.ws", (2 * config.input_patch_len, d))

    weight("time_embed", (config.max_time_positions, d), scale=0.02)
    weight("sep_cov", (d,), scale=0.02)
    weight("sep_target", (d,), scale=0.02)
    weight("query_token", (d,), scale=0.02)

    def attention(prefix: str):
        for w in ("wq", "wk", "wv", "wo"):
            weight(f"{prefix}.{w}", (d, d))

    def feed_forward(prefix: str):
        weight(f"{prefix}.w1", (d, d_ff))
        zeros(f"{prefix}.b1", (d_ff,))
        weight(f"{prefix}.w2", (d_ff, d))
        zeros(f"{prefix}.b2", (d,))

    for i in range(config.n_layers_enc):
        ones(f"enc.{i}.norm1.g", (d,))
        attention(f"enc.{i}.attn")
        ones(f"enc.{i}.norm2.g", (d,))
        feed_forward(f"enc.{i}.ff")
    ones("enc.norm.g", (d,))

    for i in range(config.n_layers_dec):
        ones(f"dec.{i}.norm1.g", (d,))
        attention(f"dec.{i}.self")
        ones(f"dec.{i}.norm2.g", (d,))
        attention(f"dec.{i}.cross")
        ones(f"dec.{i}.norm3.g", (d,))
        feed_forward(f"dec.{i}.ff")
    ones("dec.norm.g", (d,))

    weight("out_rb.w1", (d, d_ff))
    zeros("out_rb.b1", (d_ff,))
    weight("out_rb.w2", (d_ff, out_dim))
    zeros("out_rb.b2", (out_dim,))
    weight("out_rb.ws", (d, out_dim))
    return params


def num_params(params: Params) -> int:
    return sum(int(np.prod(t.shape)) for t in params.values())


def clone_params(params: Params, dtype=None) -> Params:
    return {
        name: Tensor(t.data.astype(dtype or t.data.dtype), requires_grad=True)
        for name, t in params.items()
    }


# ---------------------------------------------------------------------------
# token layout


@dataclass
class TokenSequence:
    """Per-sample model input: patch contents plus per-token metadata."""

    patch_inputs: np.ndarray   # (n_tokens, 2*m_in): [values || mask], zeros at separators
    time_index: np.ndarray     # (n_tokens,) int64, 0 at separators
    sep_kind: np.ndarray       # (n_tokens,) int8: 0 patch, 1 covariate sep, 2 target sep
    variate_id: np.ndarray     # (n_tokens,) int64; covariates 0..k-1, target k
    n_context: int
    horizon: int
    period: int
    target_scaler: ScalerState
    norm_truth: np.ndarray | None = None  # (horizon,) normalized truth, if known
    truth_mask: np.ndarray | None = None  # (horizon,) bool

    @property
    def n_tokens(self) -> int:
        return self.patch_inputs.shape[0]


def _global_patch_time_index(span: int, m_in: int) -> np.ndarray:
    """Time index per patch of a variate covering timeline [0, span).

    Indexed by the patch's absolute end position so that variates with equal
    left-padding (always true when the horizon is a multiple of the patch
    length) share indices at equal times.
    """
    n = -(-span // m_in)
    pad = n * m_in - span
    ends = (np.arange(n, dtype=np.int64) + 1) * m_in - pad
    return (ends - 1) // m_in


def decoder_time_indices(n_context: int, horizon: int, config: ModelConfig) -> np.ndarray:
    """Time-embedding index of each forecast patch (on the input-patch grid)."""
    n_dec = -(-horizon // config.output_patch_len)
    ends = n_context + (np.arange(n_dec, dtype=np.int64) + 1) * config.output_patch_len
    return (ends - 1) // config.input_patch_len


def build_input(sample: TimeSeriesSample, config: ModelConfig,
                use_covariates: bool = True) -> TokenSequence:
    """Normalize, patchify and lay out one sample as a token sequence.

    Layout: [sep_cov, cov_1 patches, ..., sep_cov, cov_k patches,
    sep_target, target patches]. Covariates are patchified over the full
    context-plus-horizon span (the unknown future of past-only covariates is
    masked); target patches cover the context only.
    """
    T = sample.context_length
    h = sample.horizon
    m_in = config.input_patch_len
    total = T + h

    target = np.asarray(sample.target, dtype=np.float64)
    observed = sample.observed_mask()
    context_mask = observed[:T]
    scaler = fit_scaler(target[:T], context_mask)
    norm_context = (target[:T] - scaler.mean) / scaler.std

    covariates = list(sample.covariates.items()) if use_covariates else []
    if len(covariates) > config.max_covariates:
        raise TokenBudgetError(
            f"sample {sample.id!r}: {len(covariates)} covariates exceed the "
            f"model limit {config.max_covariates}"
        )

    rows: list[np.ndarray] = []
    time_idx: list[np.ndarray] = []
    sep_kind: list[np.ndarray] = []
    variate_id: list[np.ndarray] = []

    def append_separator(kind: int, vid: int) -> None:
        rows.append(np.zeros((1, 2 * m_in)))
        time_idx.append(np.zeros(1, dtype=np.int64))
        sep_kind.append(np.full(1, kind, dtype=np.int8))
        variate_id.append(np.full(1, vid, dtype=np.int64))

    def append_patches(values: np.ndarray, mask: np.ndarray, span: int, vid: int) -> None:
        grid = patchify(values, mask, m_in)
        inputs = np.concatenate([grid.patches, grid.mask.astype(np.float64)], axis=1)
        rows.append(inputs)
        time_idx.append(_global_patch_time_index(span, m_in))
        sep_kind.append(np.zeros(grid.patches.shape[0], dtype=np.int8))
        variate_id.append(np.full(grid.patches.shape[0], vid, dtype=np.int64))

    for vid, (name, cov) in enumerate(covariates):
        span = sample.covariate_known_span(cov)
        lead = len(cov.values) - span
        if lead < 0:
            raise ValidationError(f"sample {sample.id!r}: covariate {name!r} too short")
        known = np.asarray(cov.values[lead:], dtype=np.float64)
        cov_scaler = fit_scaler(cov.values)  # full available span, history included
        values = np.zeros(total)
        mask = np.zeros(total, dtype=bool)
        values[:span] = (known - cov_scaler.mean) / cov_scaler.std
        mask[:span] = True
        append_separator(1, vid)
        append_patches(values, mask, total, vid)

    target_vid = len(covariates)
    append_separator(2, target_vid)
    masked_context = np.where(context_mask, norm_context, 0.0)
    append_patches(masked_context, context_mask, T, target_vid)

    seq = TokenSequence(
        patch_inputs=np.concatenate(rows, axis=0),
        time_index=np.concatenate(time_idx),
        sep_kind=np.concatenate(sep_kind),
        variate_id=np.concatenate(variate_id),
        n_context=T,
        horizon=h,
        period=sample.period,
        target_scaler=scaler,
    )

    max_needed = max(int(seq.time_index.max(initial=0)),
                     int(decoder_time_indices(T, h, config).max()))
    if max_needed >= config.max_time_positions:
        raise TokenBudgetError(
            f"sample {sample.id!r}: needs time position {max_needed}, model "
            f"allows {config.max_time_positions - 1}"
        )

    if len(target) >= total:
        seq.norm_truth = (target[T:total] - scaler.mean) / scaler.std
        seq.truth_mask = observed[T:total].copy()
    return seq


# ---------------------------------------------------------------------------
# forward pass


def _rotary_angles(positions: np.ndarray, head_dim: int, dtype) -> tuple[np.ndarray, np.ndarray]:
    half = head_dim // 2
    inv_freq = ROTARY_BASE ** (-np.arange(half, dtype=np.float64) / half)
    # (batch, 1, n, half): broadcast over heads
    ang = positions[:, None, :, None] * inv_freq
    return np.cos(ang).astype(dtype), np.sin(ang).astype(dtype)


class _RotaryCache:
    """Cos/sin tables per position array, shared across layers of one forward."""

    def __init__(self, head_dim: int, dtype):
        self.head_dim = head_dim
        self.dtype = dtype
        self._entries: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def get(self, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        key = id(positions)
        entry = self._entries.get(key)
        if entry is None:
            entry = _rotary_angles(positions, self.head_dim, self.dtype)
            self._entries[key] = entry
        return entry


def _apply_rotary(x: Tensor, cos: np.ndarray, sin: np.ndarray) -> Tensor:
    b, n_heads, n, hd = x.shape
    pairs = ad.reshape(x, (b, n_heads, n, hd // 2, 2))
    even = pairs[..., 0]
    odd = pairs[..., 1]
    r_even = even * cos - odd * sin
    r_odd = even * sin + odd * cos
    stacked = ad.concatenate(
        [ad.reshape(r_even, (b, n_heads, n, hd // 2, 1)),
         ad.reshape(r_odd, (b, n_heads, n, hd // 2, 1))],
        axis=4,
    )
    return ad.reshape(stacked, (b, n_heads, n, hd))


def _rms_norm(x: Tensor, gain: Tensor) -> Tensor:
    ms = ad.tmean(x * x, axis=-1, keepdims=True)
    return ad.div(x, ad.sqrt(ms + RMS_EPS)) * gain


def _residual_block(x: Tensor, params: Params, prefix: str) -> Tensor:
    hidden = ad.relu(ad.matmul(x, params[f"{prefix}.w1"]) + params[f"{prefix}.b1"])
    main = ad.matmul(hidden, params[f"{prefix}.w2"]) + params[f"{prefix}.b2"]
    return main + ad.matmul(x, params[f"{prefix}.ws"])


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    b, n, d = x.shape
    return ad.transpose(ad.reshape(x, (b, n, n_heads, d // n_heads)), (0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    b, n_heads, n, hd = x.shape
    return ad.reshape(ad.transpose(x, (0, 2, 1, 3)), (b, n, n_heads * hd))


def _attention(
    x_q: Tensor,
    x_kv: Tensor,
    params: Params,
    prefix: str,
    n_heads: int,
    q_positions: np.ndarray,
    k_positions: np.ndarray,
    key_bias: np.ndarray,
    rotary: _RotaryCache,
) -> Tensor:
    head_dim = x_q.shape[-1] // n_heads
    q = _split_heads(ad.matmul(x_q, params[f"{prefix}.wq"]), n_heads)
    k = _split_heads(ad.matmul(x_kv, params[f"{prefix}.wk"]), n_heads)
    v = _split_heads(ad.matmul(x_kv, params[f"{prefix}.wv"]), n_heads)
    q_cos, q_sin = rotary.get(q_positions)
    k_cos, k_sin = rotary.get(k_positions)
    q = _apply_rotary(q, q_cos, q_sin)
    k = _apply_rotary(k, k_cos, k_sin)
    scores = ad.matmul(q, ad.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(head_dim))
    scores = scores + key_bias  # (b, 1, 1, n_k) additive mask
    weights = ad.softmax(scores, axis=-1)
    return ad.matmul(_merge_heads(ad.matmul(weights, v)), params[f"{prefix}.wo"])


def _check_finite(x: Tensor, stage: str) -> None:
    if not np.all(np.isfinite(x.data)):
        raise NonFiniteError(f"non-finite activations in {stage}")


def _forward_batch(params: Params, seqs: list[TokenSequence],
                   config: ModelConfig) -> Tensor:
    """Run a padded batch; returns (batch, n_dec*m_out, n_levels) normalized."""
    dtype = params["sep_cov"].dtype
    b = len(seqs)
    m2 = 2 * config.input_patch_len
    n_max = max(s.n_tokens for s in seqs)
    n_dec_max = max(-(-s.horizon // config.output_patch_len) for s in seqs)
    n_q = len(config.quantile_levels)

    inputs = np.zeros((b, n_max, m2), dtype=dtype)
    time_idx = np.zeros((b, n_max), dtype=np.int64)
    sep_kind = np.zeros((b, n_max), dtype=np.int8)
    valid = np.zeros((b, n_max), dtype=bool)
    dec_time = np.zeros((b, n_dec_max), dtype=np.int64)
    dec_valid = np.zeros((b, n_dec_max), dtype=bool)
    dec_positions = np.zeros((b, n_dec_max), dtype=np.int64)
    enc_positions = np.broadcast_to(np.arange(n_max, dtype=np.int64), (b, n_max))

    for i, seq in enumerate(seqs):
        n = seq.n_tokens
        inputs[i, :n] = seq.patch_inputs
        time_idx[i, :n] = seq.time_index
        sep_kind[i, :n] = seq.sep_kind
        valid[i, :n] = True
        d_idx = decoder_time_indices(seq.n_context, seq.horizon, config)
        dec_time[i, : len(d_idx)] = d_idx
        dec_valid[i, : len(d_idx)] = True
        dec_positions[i] = n + np.arange(n_dec_max)  # flat order: after encoder tokens

    # --- embed tokens
    x_in = Tensor(inputs)
    embedded = _residual_block(x_in, params, "input_rb")
    time_vec = take_rows(params["time_embed"], time_idx)
    patch_mask = ((sep_kind == 0) & valid).astype(dtype)[..., None]
    sep_cov_mask = (sep_kind == 1).astype(dtype)[..., None]
    sep_tgt_mask = (sep_kind == 2).astype(dtype)[..., None]
    tokens = (
        (embedded + time_vec) * patch_mask
        + params["sep_cov"] * sep_cov_mask
        + params["sep_target"] * sep_tgt_mask
    )
    _check_finite(tokens, "input embedding")

    enc_bias = np.where(valid, 0.0, -1e9).astype(dtype)[:, None, None, :]
    rotary = _RotaryCache(config.head_dim, dtype)

    x = tokens
    for i in range(config.n_layers_enc):
        normed = _rms_norm(x, params[f"enc.{i}.norm1.g"])
        x = x + _attention(normed, normed, params, f"enc.{i}.attn", config.n_heads,
                           enc_positions, enc_positions, enc_bias, rotary)
        x = x + _feed_forward(_rms_norm(x, params[f"enc.{i}.norm2.g"]), params, f"enc.{i}.ff")
    encoded = _rms_norm(x, params["enc.norm.g"])
    _check_finite(encoded, "encoder")

    # --- decoder: one learned query per forecast patch
    y = params["query_token"] + take_rows(params["time_embed"], dec_time)
    dec_bias = np.where(dec_valid, 0.0, -1e9).astype(dtype)[:, None, None, :]

    for i in range(config.n_layers_dec):
        normed = _rms_norm(y, params[f"dec.{i}.norm1.g"])
        y = y + _attention(normed, normed, params, f"dec.{i}.self", config.n_heads,
                           dec_positions, dec_positions, dec_bias, rotary)
        y = y + _attention(_rms_norm(y, params[f"dec.{i}.norm2.g"]), encoded, params,
                           f"dec.{i}.cross", config.n_heads,
                           dec_positions, enc_positions, enc_bias, rotary)
        y = y + _feed_forward(_rms_norm(y, params[f"dec.{i}.norm3.g"]), params, f"dec.{i}.ff")
    decoded = _rms_norm(y, params["dec.norm.g"])
    _check_finite(decoded, "decoder")

    out = _residual_block(decoded, params, "out_rb")
    _check_finite(out, "output head")
    return ad.reshape(out, (b, n_dec_max * config.output_patch_len, n_q))


def take_rows(table: Tensor, indices: np.ndarray) -> Tensor:
    """Gather rows of a 2-d table with arbitrary index shape; output
    shape is ``indices.shape + (row_width,)``."""
    flat = ad.take(table, indices.reshape(-1))
    return ad.reshape(flat, indices.shape + (table.shape[1],))


def _feed_forward(x: Tensor, params: Params, prefix: str) -> Tensor:
    hidden = ad.relu(ad.matmul(x, params[f"{prefix}.w1"]) + params[f"{prefix}.b1"])
    return ad.matmul(hidden, params[f"{prefix}.w2"]) + params[f"{prefix}.b2"]


def forward(params: Params, seq: TokenSequence, config: ModelConfig) -> np.ndarray:
    """Quantile forecast for one token sequence, in normalized space (h, |Q|)."""
    with ad.no_grad():
        out = _forward_batch(params, [seq], config)
    return out.data[0, : seq.horizon, :]


# ---------------------------------------------------------------------------
# loss


def quantile_loss(
    pred: np.ndarray,
    truth: np.ndarray,
    levels: tuple[float, ...],
    observed_mask: np.ndarray | None = None,
) -> float:
    """Mean pinball loss over timesteps and quantile levels.

    Masked timesteps are excluded and the normalizer is reduced accordingly;
    a fully masked horizon yields 0.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    q = np.asarray(levels, dtype=np.float64)[None, :]
    if pred.shape != (truth.shape[0], q.shape[1]):
        raise ValidationError("prediction shape does not match truth and levels")
    residual = truth[:, None] - pred
    per_cell = np.where(pred <= truth[:, None], q * residual, (q - 1.0) * residual)
    if observed_mask is None:
        n_obs = truth.shape[0]
        total = per_cell.sum()
    else:
        observed_mask = np.asarray(observed_mask, dtype=bool)
        n_obs = int(observed_mask.sum())
        total = per_cell[observed_mask].sum()
    if n_obs == 0:
        return 0.0
    return float(total / (n_obs * q.shape[1]))


def batch_quantile_loss(params: Params, seqs: list[TokenSequence],
                        config: ModelConfig) -> Tensor:
    """Differentiable mean-over-batch quantile loss (normalized space)."""
    dtype = params["sep_cov"].dtype
    b = len(seqs)
    out = _forward_batch(params, seqs, config)
    h_pad = out.shape[1]
    n_q = len(config.quantile_levels)

    truth = np.zeros((b, h_pad), dtype=dtype)
    mask = np.zeros((b, h_pad), dtype=bool)
    for i, seq in enumerate(seqs):
        if seq.norm_truth is None:
            raise ValidationError("sequence without truth cannot enter the loss")
        truth[i, : seq.horizon] = seq.norm_truth
        mask[i, : seq.horizon] = seq.truth_mask
    levels = np.asarray(config.quantile_levels, dtype=dtype)[None, None, :]
    counts = np.maximum(mask.sum(axis=1), 1) * n_q  # (b,)

    residual = Tensor(truth[..., None]) - out
    is_under = out.data <= truth[..., None]
    per_cell = ad.where(is_under, residual * levels, residual * (levels - 1.0))
    masked = per_cell * mask[..., None].astype(dtype)
    per_sample = ad.tsum(masked, axis=(1, 2)) * (1.0 / counts).astype(dtype)
    return ad.tmean(per_sample)


# ---------------------------------------------------------------------------
# inference


def predict(
    params: Params,
    sample: TimeSeriesSample,
    config: ModelConfig,
    use_covariates: bool = True,
    sort_quantiles: bool = True,
) -> QuantileForecast:
    """Forecast one sample in its original scale.

    With ``use_covariates=False`` all covariates are dropped from the input;
    ``sort_quantiles`` sorts the per-timestep values ascending across levels
    to remove quantile crossings.
    """
    seq = build_input(sample, config, use_covariates=use_covariates)
    values = forward(params, seq, config).astype(np.float64)
    scaler = seq.target_scaler
    values = values * scaler.std + scaler.mean
    if sort_quantiles:
        values = np.sort(values, axis=1)
    return QuantileForecast(levels=tuple(config.quantile_levels), values=values)


# ---------------------------------------------------------------------------
# checkpoint format
#
# A checkpoint is a single binary file:
#   bytes 0..7   magic "TSFCKPT1"
#   bytes 8..15  little-endian uint64: header length in bytes
#   header       UTF-8 JSON: {"config": {...}, "tensors": [{"name", "shape"}, ...]}
#   payload      for each tensor, in header order: raw little-endian float32,
#                C-contiguous
_MAGIC = b"TSFCKPT1"


def save_checkpoint(path, params: Params, config: ModelConfig) -> None:
    header = {
        "config": {
            "d_model": config.d_model,
            "n_layers_enc": config.n_layers_enc,
            "n_layers_dec": config.n_layers_dec,
            "n_heads": config.n_heads,
            "d_ff": config.d_ff,
            "input_patch_len": config.input_patch_len,
            "output_patch_len": config.output_patch_len,
            "quantile_levels": list(config.quantile_levels),
            "max_time_positions": config.max_time_positions,
            "max_covariates": config.max_covariates,
        },
        "tensors": [{"name": name, "shape": list(t.shape)} for name, t in params.items()],
    }
    blob = json.dumps(header, allow_nan=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for t in params.values():
            fh.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[Params, ModelConfig]:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValidationError(f"{path}: not a checkpoint file")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        cfg = header["config"]
        config = ModelConfig(
            d_model=cfg["d_model"],
            n_layers_enc=cfg["n_layers_enc"],
            n_layers_dec=cfg["n_layers_dec"],
            n_heads=cfg["n_heads"],
            d_ff=cfg["d_ff"],
            input_patch_len=cfg["input_patch_len"],
            output_patch_len=cfg["output_patch_len"],
            quantile_levels=tuple(cfg["quantile_levels"]),
            max_time_positions=cfg["max_time_positions"],
            max_covariates=cfg["max_covariates"],
        )
        params: Params = {}
        for spec in header["tensors"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 4)
            arr = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
            params[spec["name"]] = Tensor(arr, requires_grad=True)
    config.validate()
    return params, config
