"""Shared optimizer and training loop for all gradient-based models."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .dataset import WindowedDataset
from .exceptions import InvalidConfigError, InvalidInputError, NumericError


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    l2_weight: float = 1e-6
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if self.learning_rate <= 0 or self.l2_weight < 0 or self.patience < 1:
            raise InvalidConfigError("need lr > 0, l2 >= 0, patience >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise InvalidConfigError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_val_mse: float = float("inf")

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_mse", "val_mse"])
            for r in self.records:
                writer.writerow([r.epoch, repr(r.train_mse), repr(r.val_mse)])


def mse_l2_loss(pred: Tensor, target, params: dict[str, Tensor] | None, l2_weight: float) -> Tensor:
    """Mean squared error plus L2 over weight parameters (names ending .w)."""
    target = np.asarray(getattr(target, "data", target), dtype=np.float64)
    if pred.shape != target.shape:
        raise InvalidInputError(f"prediction {pred.shape} vs target {target.shape}")
    diff = pred - Tensor(target)
    loss = (diff * diff).mean()
    if l2_weight > 0.0 and params:
        for name, p in params.items():
            if name.endswith(".w"):
                loss = loss + (p * p).sum() * l2_weight
    return loss


class Adam:
    """Adaptive first-order optimizer (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params: dict[str, Tensor], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mhat = self.m[k] / (1 - b1**self.t)
            vhat = self.v[k] / (1 - b2**self.t)
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


class Sgd:
    def __init__(self, params: dict[str, Tensor], lr: float):
        self.params = params
        self.lr = lr

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            p.data -= self.lr * grads[k]


def _forward_mse(model, inputs: np.ndarray, targets: np.ndarray, chunk: int = 256) -> float:
    """Plain MSE of the model over a dataset, evaluated in chunks."""
    total = 0.0
    count = 0
    for lo in range(0, inputs.shape[0], chunk):
        pred = model.forward_batch(inputs[lo : lo + chunk]).data
        t = targets[lo : lo + chunk]
        total += float(np.sum((pred - t) ** 2))
        count += t.size
    return total / max(count, 1)


def train(
    model,
    train_split: WindowedDataset,
    val_split: WindowedDataset,
    cfg: TrainConfig,
    history_path=None,
) -> tuple[dict[str, Tensor], TrainHistory]:
    """Mini-batch training with early stopping on validation MSE.

    Batch order is drawn from the config seed, so runs are reproducible.
    The parameters achieving the best recorded validation MSE are restored
    before returning.
    """
    params = model.parameters()
    opt = Adam(params, cfg.learning_rate) if cfg.optimizer == "adam" else Sgd(params, cfg.learning_rate)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    history = TrainHistory()
    best_state: dict[str, np.ndarray] = {k: p.data.copy() for k, p in params.items()}
    stale = 0

    n = len(train_split)
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        epoch_count = 0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            pred = model.forward_batch(train_split.inputs[idx])
            loss = mse_l2_loss(pred, train_split.targets[idx], params, cfg.l2_weight)
            if not np.isfinite(loss.data):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch {lo // cfg.batch_size} "
                    f"(lr={cfg.learning_rate})"
                )
            grads = ad.gradients(loss, params)
            opt.step(grads)
            epoch_loss += float(loss.data) * idx.size
            epoch_count += idx.size
        val_mse = _forward_mse(model, val_split.inputs, val_split.targets)
        history.records.append(EpochRecord(epoch, epoch_loss / max(epoch_count, 1), val_mse))
        if val_mse < history.best_val_mse:
            history.best_val_mse = val_mse
            history.best_epoch = epoch
            best_state = {k: p.data.copy() for k, p in params.items()}
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    for k, p in params.items():
        p.data = best_state[k].copy()
    if history_path is not None:
        history.write_csv(history_path)
    return params, history
