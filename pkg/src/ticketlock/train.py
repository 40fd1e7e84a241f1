"""SGD training with frozen sparsity masks.

The mask never changes during training: gradients and weights are re-masked
every step, so pruned positions hold exact zeros at every checkpoint. A
rewind snapshot (weights after the configured epoch) is captured for
iterative pruning. When a trigger set is supplied, trigger batches are
interleaved with task batches each epoch so the model memorizes the
fingerprint labels alongside the task.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ._rng import substream
from .data import Dataset, TriggerSet
from .model import ModelError, SparseModel
from .nets import backward_pass, forward_pass, softmax_xent


class TrainingDiverged(RuntimeError):
    """Loss became NaN/inf; carries the epoch and step for diagnosis."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    lr: float = 0.1
    milestones: tuple[int, ...] = (20, 32)
    lr_decay: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 64
    seed: int = 0
    rewind_epoch: int = 3

    def __post_init__(self):
        if self.lr <= 0 or self.lr_decay <= 0:
            raise ValueError("rates must be positive")
        if not (0 <= self.rewind_epoch < self.epochs):
            raise ValueError("rewind_epoch must be < epochs")


@dataclass(frozen=True)
class TrainResult:
    model: SparseModel
    test_acc: float
    train_acc: float
    rewind_weights: tuple[np.ndarray, ...]
    rewind_biases: tuple[np.ndarray, ...]
    trigger_acc: Optional[float] = None
    losses: tuple[float, ...] = field(default_factory=tuple)


def evaluate(model: SparseModel, data: Dataset) -> float:
    """Test-set accuracy; deterministic in (model, data)."""
    if data.input_shape != model.arch.input_shape:
        raise ModelError(
            f"dataset shape {data.input_shape} != model input {model.arch.input_shape}"
        )
    logits = forward_pass(model.arch, model.masked_weights(), list(model.biases), data.x_test)
    return float((logits.argmax(axis=1) == data.y_test).mean())


def trigger_accuracy(model: SparseModel, trigger: TriggerSet) -> float:
    logits = forward_pass(model.arch, model.masked_weights(), list(model.biases), trigger.x)
    return float((logits.argmax(axis=1) == trigger.y).mean())


def train(
    model: SparseModel,
    data: Dataset,
    cfg: TrainConfig,
    trigger: Optional[TriggerSet] = None,
) -> TrainResult:
    """Train only the unmasked weights; returns a new model plus metrics."""
    if data.input_shape != model.arch.input_shape:
        raise ModelError(
            f"dataset shape {data.input_shape} != model input {model.arch.input_shape}"
        )
    if data.n_classes != model.arch.n_classes:
        raise ModelError("class count mismatch between dataset and model head")

    arch = model.arch
    mask_arrays = [m.to_array().astype(np.float32) for m in model.masks]
    weights = [(w * m).astype(np.float32) for w, m in zip(model.weights, mask_arrays)]
    biases = [b.copy() for b in model.biases]
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]

    rng = substream(cfg.seed, "train")
    n = len(data.x_train)
    rewind_w = tuple(w.copy() for w in weights)
    rewind_b = tuple(b.copy() for b in biases)
    losses = []

    lr = cfg.lr
    for epoch in range(cfg.epochs):
        if epoch in cfg.milestones:
            lr *= cfg.lr_decay
        order = rng.permutation(n)
        batches: list[tuple[np.ndarray, np.ndarray]] = [
            (data.x_train[order[i : i + cfg.batch_size]], data.y_train[order[i : i + cfg.batch_size]])
            for i in range(0, n, cfg.batch_size)
        ]
        if trigger is not None:
            # trigger batches are spliced at seeded positions, one per four
            # task batches, so memorization keeps pace with the task
            repeats = max(1, len(batches) // 4)
            for _ in range(repeats):
                slot = int(rng.integers(0, len(batches) + 1))
                batches.insert(slot, (trigger.x, trigger.y))
        epoch_loss = 0.0
        for step, (xb, yb) in enumerate(batches):
            logits, cache = forward_pass(arch, weights, biases, xb, keep_cache=True)
            loss, gl = softmax_xent(logits, yb)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"loss {loss} at epoch {epoch} step {step} (lr={lr})")
            epoch_loss += loss
            gws, gbs = backward_pass(arch, weights, cache, gl)
            for i in range(len(weights)):
                gw = (gws[i] + cfg.weight_decay * weights[i]) * mask_arrays[i]
                vel_w[i] = cfg.momentum * vel_w[i] + gw
                weights[i] = ((weights[i] - lr * vel_w[i]) * mask_arrays[i]).astype(np.float32)
                vel_b[i] = cfg.momentum * vel_b[i] + gbs[i]
                biases[i] = (biases[i] - lr * vel_b[i]).astype(np.float32)
        losses.append(epoch_loss / len(batches))
        if epoch == cfg.rewind_epoch:
            rewind_w = tuple(w.copy() for w in weights)
            rewind_b = tuple(b.copy() for b in biases)

    trained = replace(
        model,
        weights=tuple(weights),
        biases=tuple(biases),
    )
    train_logits = forward_pass(arch, weights, biases, data.x_train)
    result = TrainResult(
        model=trained,
        test_acc=evaluate(trained, data),
        train_acc=float((train_logits.argmax(axis=1) == data.y_train).mean()),
        rewind_weights=rewind_w,
        rewind_biases=rewind_b,
        trigger_acc=trigger_accuracy(trained, trigger) if trigger is not None else None,
        losses=tuple(losses),
    )
    return result
