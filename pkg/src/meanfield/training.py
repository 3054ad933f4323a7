"""Adam training of MVNN drifts on finite-difference targets."""

from dataclasses import dataclass
import logging
import time

import numpy as np

from .data import minibatch_iter
from .errors import ConfigError
from .dynamics import ParticleState
from .mvnn import loss_grad, mg_mvnn_drift_all
from .nn import AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass
class OptimConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 4096
    epochs: int = 500
    seed: int = 0
    snapshots_per_batch: int = 8
    lr_final: float = None
    shift_augment: float = 0.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")


def dataset_mse(model, dataset, chunk=16):
    """Exact mean squared residual over every sample of ``dataset``.

    Matches the training loss restricted to the whole dataset (for
    multi-group models: the sum of per-group means).
    """
    if dataset.n_snapshots == 0:
        return float("nan")
    total, count = 0.0, 0
    for start in range(0, dataset.n_snapshots, chunk):
        ids = np.arange(start, min(start + chunk, dataset.n_snapshots))
        loss, _ = loss_grad(model, dataset.batch(ids), need_grad=False)
        total += loss * len(ids)
        count += len(ids)
    return total / count


def zero_predictor_mse(dataset):
    """Loss of the drift that is identically zero."""
    t = dataset.targets
    if dataset.group_sizes is None:
        return float(np.mean(np.sum(t * t, axis=-1)))
    off = np.concatenate([[0], np.cumsum(dataset.group_sizes)])
    return float(sum(np.mean(np.sum(t[:, a:b] ** 2, axis=-1)) for a, b in zip(off[:-1], off[1:])))


def group_mse(model, dataset, chunk=16):
    """Per-group mean squared residual (multi-group models)."""
    off = np.concatenate([[0], np.cumsum(dataset.group_sizes)])
    sums = np.zeros(len(off) - 1)
    for s in range(dataset.n_snapshots):
        state = ParticleState(dataset.states[s], None, dataset.group_sizes)
        pred = np.concatenate(mg_mvnn_drift_all(model, state))
        err = np.sum((pred - dataset.targets[s]) ** 2, axis=-1)
        sums += [err[a:b].mean() for a, b in zip(off[:-1], off[1:])]
    zero = [float(np.mean(np.sum(dataset.targets[:, a:b] ** 2, axis=-1)))
            for a, b in zip(off[:-1], off[1:])]
    return (sums / dataset.n_snapshots).tolist(), zero


def shift_positions(batch, d, scale, rng):
    """Translate each snapshot of ``batch`` by an independent N(0, scale^2 I) offset.

    Targets are unchanged, which is exact for translation-equivariant drifts.
    """
    shift = scale * rng.standard_normal((batch.snapshots.shape[0], 1, d))
    batch.snapshots[..., :d] += shift


def batches_per_epoch(dataset, optim):
    """Number of minibatches :func:`minibatch_iter` yields per epoch."""
    S, N, bs, spb = dataset.n_snapshots, dataset.N, optim.batch_size, optim.snapshots_per_batch
    if spb is None:
        return -(-S * N // bs)
    full, rest = divmod(S, spb)
    return full * -(-spb * N // bs) + (-(-rest * N // bs) if rest else 0)


def train(model, train_set, optim, test_set=None, callback=None):
    """Minimize the drift regression loss with minibatch Adam.

    Returns ``(model, history)``; ``history`` rows are
    ``(epoch, mean train batch loss, test loss)``.  The learning rate decays
    geometrically from ``lr`` to ``lr_final`` over the run when ``lr_final``
    is set.
    """
    state = AdamState.fresh(model, optim.lr, optim.beta1, optim.beta2, optim.eps)
    total_steps = batches_per_epoch(train_set, optim) * optim.epochs if optim.lr_final is not None else 0
    history = []
    epoch_seeds = np.random.SeedSequence(optim.seed).generate_state(optim.epochs, np.uint64)
    aug_rng = np.random.default_rng(np.random.SeedSequence((optim.seed, 1)))
    for epoch in range(optim.epochs):
        t0 = time.perf_counter()
        losses = []
        for batch in minibatch_iter(train_set, optim.batch_size, int(epoch_seeds[epoch]),
                                    optim.snapshots_per_batch):
            if total_steps:
                frac = state.t / max(1, total_steps - 1)
                state.lr = optim.lr * (optim.lr_final / optim.lr) ** min(frac, 1.0)
            if optim.shift_augment > 0:
                shift_positions(batch, model.d, optim.shift_augment, aug_rng)
            loss, grads = loss_grad(model, batch)
            state, model = adam_step(state, model, grads)
            losses.append(loss)
        train_loss = float(np.mean(losses))
        test_loss = dataset_mse(model, test_set) if test_set is not None else float("nan")
        history.append((epoch, train_loss, test_loss))
        log.info("epoch %d train %.6g test %.6g (%.1fs)", epoch, train_loss, test_loss,
                 time.perf_counter() - t0)
        if callback is not None:
            callback(epoch, model, train_loss, test_loss)
    return model, history
