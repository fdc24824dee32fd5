"""Mini-batch training with Adam and validation early stopping."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .models import ConfigError, Model, build_model, from_rows, to_rows
from .optim import AdamState, adam_step
from .windows import SampleSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-4
    batch_size: int = 128
    max_epochs: int = 500
    patience: int = 50
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    hidden: int = 128
    chunk_rows: int = 4096  # cell-rows per forward/backward pass; bounds memory only

    def __post_init__(self) -> None:
        if not (self.lr > 0 and self.batch_size > 0 and self.patience > 0 and self.max_epochs > 0):
            raise ValueError("lr, batch_size, patience and max_epochs must be positive")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.hidden < 1 or self.chunk_rows < 1:
            raise ValueError("hidden and chunk_rows must be positive")


@dataclass
class History:
    train_mse: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def epochs(self) -> int:
        return len(self.val_mse)


class EarlyStopping:
    """Tracks the best validation score; ``update`` returns True once patience runs out."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, score: float, epoch: int) -> bool:
        if score < self.best:
            self.best, self.best_epoch, self.wait = score, epoch, 0
            return False
        self.wait += 1
        return self.wait >= self.patience


def loss_and_grads_rows(model: Model, xs: np.ndarray, ys: np.ndarray, chunk_rows: int = 4096):
    """Mean squared error over cell rows ``(R, L, C)`` vs ``(R, T)`` and its parameter gradients."""
    count = ys.size
    total = 0.0
    grads: dict[str, np.ndarray] = {}
    for lo in range(0, xs.shape[0], chunk_rows):
        pred = model.forward_rows(xs[lo:lo + chunk_rows])
        err = pred - ys[lo:lo + chunk_rows]
        total += float((err * err).sum())
        for name, g in model.backward_rows(2.0 * err / count).items():
            grads[name] = grads[name] + g if name in grads else g
    return total / count, grads


def loss_and_grads(model: Model, x: np.ndarray, y: np.ndarray, chunk_rows: int = 4096):
    """Batch form of :func:`loss_and_grads_rows` for ``(B, L, M, C)`` inputs and ``(B, T, M)`` targets."""
    return loss_and_grads_rows(model, to_rows(x), y.transpose(0, 2, 1).reshape(-1, y.shape[1]), chunk_rows)


def _forward_all(model: Model, xs: np.ndarray, chunk_rows: int) -> np.ndarray:
    return np.concatenate([model.forward_rows(xs[i:i + chunk_rows]) for i in range(0, len(xs), chunk_rows)])


def predict(model: Model, samples: SampleSet, batch_size: int = 128, chunk_rows: int = 4096) -> np.ndarray:
    """Predictions ``(S, T, M)`` for every sample."""
    m = samples.inputs.shape[1]
    out = []
    for lo in range(0, len(samples), batch_size):
        idx = np.arange(lo, min(lo + batch_size, len(samples)))
        xs, _ = samples.rows(idx)
        out.append(from_rows(_forward_all(model, xs, chunk_rows), len(idx), m))
    return np.concatenate(out) if out else np.zeros((0, samples.horizon, m))


def evaluate(model: Model, samples: SampleSet, batch_size: int = 128, chunk_rows: int = 4096) -> float:
    if len(samples) == 0:
        raise ConfigError("cannot evaluate on an empty sample set")
    sse, count = 0.0, 0
    for lo in range(0, len(samples), batch_size):
        xs, ys = samples.rows(np.arange(lo, min(lo + batch_size, len(samples))))
        err = _forward_all(model, xs, chunk_rows) - ys
        sse += float((err * err).sum())
        count += err.size
    return sse / count


def train(kind: str, train_set: SampleSet, val_set: SampleSet, cfg: TrainConfig, seed: int) -> tuple[Model, History]:
    """Fit one backbone; returns the model restored to its best validation epoch."""
    if len(train_set) == 0 or len(val_set) == 0:
        raise ConfigError("train and validation splits must be non-empty")
    init_rng = np.random.default_rng([seed, 0])
    order_rng = np.random.default_rng([seed, 1])
    model = build_model(kind, train_set.lookback, train_set.horizon, train_set.channels, init_rng, cfg.hidden)
    state = AdamState()
    stopper = EarlyStopping(cfg.patience)
    history = History()
    best = model.get_state()
    n = len(train_set)
    for epoch in range(1, cfg.max_epochs + 1):
        perm = order_rng.permutation(n)
        sse = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo:lo + cfg.batch_size]
            xs, ys = train_set.rows(idx)
            loss, grads = loss_and_grads_rows(model, xs, ys, cfg.chunk_rows)
            model.params = adam_step(model.params, grads, state, cfg.lr, cfg.betas, cfg.eps)
            sse += loss * len(idx)
        val = evaluate(model, val_set, cfg.batch_size, cfg.chunk_rows)
        history.train_mse.append(sse / n)
        history.val_mse.append(val)
        stop = stopper.update(val, epoch)
        if stopper.best_epoch == epoch:
            best = model.get_state()
        if stop:
            break
    model.set_state(best)
    history.best_epoch = stopper.best_epoch
    logger.debug("%s seed=%d stopped after %d epochs (best %d, val %.5f)",
                 kind, seed, history.epochs, history.best_epoch, stopper.best)
    return model, history
