"""Minibatch training loop with deterministic shuffling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import BATCH_SIZE, LEARNING_RATE, AdamState, GoalPredictionNet


@dataclass
class TrainReport:
    train_losses: list[float]
    val_losses: list[float]

    @property
    def final_val(self) -> float:
        return self.val_losses[-1]


def train(
    net: GoalPredictionNet,
    buckets: np.ndarray,
    targets: np.ndarray,
    val_buckets: np.ndarray | None = None,
    val_targets: np.ndarray | None = None,
    epochs: int = 20,
    batch_size: int = BATCH_SIZE,
    lr: float = LEARNING_RATE,
    seed: int = 0,
    log=None,
) -> TrainReport:
    """Train in place; returns per-epoch mean train loss and val loss.

    Deterministic for fixed inputs and seed.  When no validation split is
    given the training loss doubles as the reported validation number.
    """
    n = buckets.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(seed)
    adam = AdamState()
    report = TrainReport([], [])
    for epoch in range(epochs):
        order = rng.permutation(n)
        losses = []
        for lo in range(0, n, batch_size):
            idx = order[lo : lo + batch_size]
            loss, grads = net.loss_and_grads(buckets[idx], targets[idx])
            adam.step(net, grads, lr)
            losses.append(loss)
        train_loss = float(np.mean(losses))
        if val_buckets is not None and len(val_buckets):
            val_loss = net.loss(val_buckets, val_targets)
        else:
            val_loss = train_loss
        report.train_losses.append(train_loss)
        report.val_losses.append(val_loss)
        if log is not None:
            log(f"epoch {epoch + 1}/{epochs} train {train_loss:.4f} val {val_loss:.4f}")
    return report
