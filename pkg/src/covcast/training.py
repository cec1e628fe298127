"""Training loop (decoupled-weight-decay Adam, warmup + cosine schedule)
and the finite-difference gradient checker."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ModelConfig, TrainConfig
from .dataio import TimeSeriesSample
from .errors import TrainingDiverged, ValidationError
from .model import Params, batch_quantile_loss, build_input, clone_params

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def learning_rate_at(step: int, total_steps: int, base_lr: float,
                     warmup_frac: float) -> float:
    """Linear warmup over the first ``warmup_frac`` of steps, then cosine
    decay to zero."""
    warmup = int(np.ceil(warmup_frac * total_steps))
    if warmup > 0 and step < warmup:
        return base_lr * (step + 1) / warmup
    if total_steps <= warmup:
        return base_lr
    progress = (step - warmup) / (total_steps - warmup)
    return base_lr * 0.5 * (1.0 + np.cos(np.pi * progress))


class AdamW:
    """Adam with decoupled weight decay over a named parameter store."""

    def __init__(self, params: Params, weight_decay: float):
        self.params = params
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}

    def step(self, lr: float) -> None:
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - ADAM_BETA1**t
        bias2 = 1.0 - ADAM_BETA2**t
        for name, param in self.params.items():
            grad = param.grad if param.grad is not None else 0.0
            m = self.m[name] = ADAM_BETA1 * self.m[name] + (1 - ADAM_BETA1) * grad
            v = self.v[name] = ADAM_BETA2 * self.v[name] + (1 - ADAM_BETA2) * grad**2
            update = (m / bias1) / (np.sqrt(v / bias2) + ADAM_EPS)
            param.data = param.data - lr * (update + self.weight_decay * param.data)

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.grad = None


@dataclass
class TrainResult:
    params: Params
    losses: list[float]


def _bucketed_batches(sequences, batch_size: int, rng: np.random.Generator):
    """Endless batch iterator with token-length bucketing.

    Token counts vary widely across samples (the covariate count is random),
    and uniformly drawn batches pad almost every step to the global maximum.
    Instead, each epoch shuffles samples within equal-length buckets, chops
    the bucket-ordered corpus into consecutive batches, and shuffles the
    batch order: every sample appears once per epoch and batches stay nearly
    homogeneous in length.
    """
    order = np.argsort([s.n_tokens for s in sequences], kind="stable")
    lengths = np.array([sequences[i].n_tokens for i in order])
    boundaries = np.flatnonzero(np.diff(lengths)) + 1
    buckets = np.split(order, boundaries)
    while True:
        epoch = np.concatenate([rng.permutation(bucket) for bucket in buckets])
        n_batches = max(1, len(epoch) // batch_size)
        starts = rng.permutation(n_batches)
        for b in starts:
            idx = epoch[b * batch_size : (b + 1) * batch_size]
            if len(idx) == 0:
                idx = epoch[:batch_size]
            yield [sequences[i] for i in idx]


def train(
    params: Params,
    corpus: Iterable[TimeSeriesSample],
    model_config: ModelConfig,
    train_config: TrainConfig,
    rng: np.random.Generator,
) -> TrainResult:
    """Minimize the quantile loss over the corpus.

    The corpus is materialized and tokenized once up front; each step draws
    a batch of sample indices from ``rng``. Single-threaded and fully
    deterministic for a fixed seed.
    """
    train_config.validate()
    samples = list(corpus)
    if not samples:
        raise ValidationError("training corpus is empty")
    sequences = [build_input(s, model_config) for s in samples]
    for seq, sample in zip(sequences, samples):
        if seq.norm_truth is None:
            raise ValidationError(f"sample {sample.id!r} has no horizon truth")

    optimizer = AdamW(params, train_config.weight_decay)
    losses: list[float] = []
    batches = _bucketed_batches(sequences, train_config.batch_size, rng)
    for step in range(train_config.steps):
        batch = next(batches)
        loss = batch_quantile_loss(params, batch, model_config)
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingDiverged(step)
        losses.append(value)
        optimizer.zero_grad()
        loss.backward()
        lr = learning_rate_at(step, train_config.steps,
                              train_config.learning_rate, train_config.warmup_frac)
        optimizer.step(lr)
    optimizer.zero_grad()
    return TrainResult(params=params, losses=losses)


def gradient_check(
    params: Params,
    sample: TimeSeriesSample,
    config: ModelConfig,
    epsilon: float = 1e-5,
    n_checks: int = 200,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients
    of the quantile loss, over randomly chosen parameter coordinates.

    Runs in double precision on a copy of ``params``.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    work = clone_params(params, dtype=np.float64)
    seq = build_input(sample, config)
    if seq.norm_truth is None:
        raise ValidationError("gradient check needs a sample with horizon truth")

    loss = batch_quantile_loss(work, [seq], config)
    loss.backward()
    analytic = {name: (t.grad if t.grad is not None else np.zeros_like(t.data))
                for name, t in work.items()}

    names = list(work.keys())
    sizes = np.array([work[n].data.size for n in names])
    total = int(sizes.sum())
    chosen = rng.choice(total, size=min(n_checks, total), replace=False)
    bounds = np.cumsum(sizes)

    def loss_value() -> float:
        with ad.no_grad():
            return batch_quantile_loss(work, [seq], config).item()

    max_rel = 0.0
    for flat_pos in chosen:
        which = int(np.searchsorted(bounds, flat_pos, side="right"))
        offset = int(flat_pos - (bounds[which - 1] if which > 0 else 0))
        data = work[names[which]].data.reshape(-1)
        original = data[offset]
        data[offset] = original + epsilon
        hi = loss_value()
        data[offset] = original - epsilon
        lo = loss_value()
        data[offset] = original
        numeric = (hi - lo) / (2 * epsilon)
        exact = analytic[names[which]].reshape(-1)[offset]
        rel = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-6)
        max_rel = max(max_rel, rel)
    return max_rel
