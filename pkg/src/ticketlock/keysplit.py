"""Split a ticket's masks into a small key part and a large locked part.

The key mask keeps the n top-scored surviving positions (strictly above the
tie boundary T, so ties at T are excluded and the key may hold fewer than
n). The locked mask is the remainder. Key and locked model bundles each
carry the full rewind checkpoint so that merging them reproduces the
original bundle bit-exactly and either half can be retrained.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .data import Dataset
from .masks import LayerMask, rspar
from .model import SparseModel
from .scoring import ScoreMatrixSet
from .train import TrainConfig


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class KeySplit:
    key_masks: tuple[LayerMask, ...]
    locked_masks: tuple[LayerMask, ...]
    method: str
    n: int
    threshold: float
    realized: int
    budget: Optional[float] = None

    def relative_sparsity(self) -> float:
        merged = [
            LayerMask.from_array(k.to_array() | l.to_array())
            for k, l in zip(self.key_masks, self.locked_masks)
        ]
        return rspar(list(self.key_masks), merged)


def budget_to_count(budget: float, nnz: int) -> int:
    """Relative-sparsity budget to a position count, floor(budget * nnz)."""
    if not 0.0 < budget <= 1.0:
        raise SplitError("budget must lie in (0, 1]")
    return int(budget * nnz)


def split(model: SparseModel, scores: ScoreMatrixSet, n: int) -> KeySplit:
    """Select the top-n scored surviving positions as the key mask."""
    mask_arrays = [m.to_array().astype(bool) for m in model.masks]
    nnz = int(sum(m.sum() for m in mask_arrays))
    if n <= 0 or n > nnz:
        raise SplitError(f"key size must lie in 1..{nnz}, got {n}")
    for s, m in zip(scores.scores, mask_arrays):
        if s.shape != m.shape:
            raise SplitError("score matrices are not shape-congruent with masks")
        if not np.isfinite(s[m]).all():
            raise SplitError("scores must be finite at surviving positions")
        if np.isfinite(s[~m]).any():
            raise SplitError("scores must be NEG_INF at pruned positions")

    flat = np.concatenate([s[m] for s, m in zip(scores.scores, mask_arrays)])
    if n == nnz:
        threshold = -np.inf
    else:
        # largest score outside the top-n set; strict > keeps at most n
        threshold = float(np.partition(flat, -(n + 1))[-(n + 1)])

    key, locked = [], []
    realized = 0
    for s, m in zip(scores.scores, mask_arrays):
        k = (s > threshold) & m
        realized += int(k.sum())
        key.append(LayerMask.from_array(k))
        locked.append(LayerMask.from_array(m & ~k))
    return KeySplit(
        key_masks=tuple(key),
        locked_masks=tuple(locked),
        method=scores.method,
        n=n,
        threshold=threshold,
        realized=realized,
    )


def split_models(model: SparseModel, ks: KeySplit) -> tuple[SparseModel, SparseModel]:
    """Materialize (key, locked) bundles whose merge is bit-exactly the input.

    The key bundle holds the key-position weights and zero biases; the locked
    bundle holds the rest plus the trained biases. Both keep the rewind
    checkpoint, since the protected secret is the key mask topology.
    """
    key_model = replace(
        model,
        weights=tuple(
            (w * m.to_array()).astype(np.float32) for w, m in zip(model.weights, ks.key_masks)
        ),
        masks=ks.key_masks,
        biases=tuple(np.zeros_like(b) for b in model.biases),
        meta=dict(model.meta),
    )
    locked_model = replace(
        model,
        weights=tuple(
            (w * m.to_array()).astype(np.float32)
            for w, m in zip(model.weights, ks.locked_masks)
        ),
        masks=ks.locked_masks,
        biases=tuple(b.copy() for b in model.biases),
        meta=dict(model.meta),
    )
    return key_model, locked_model


def retrain_without_key(locked_part: SparseModel, data: Dataset, cfg: TrainConfig) -> float:
    """Retrain the locked half alone from its rewind checkpoint; test accuracy."""
    from .imp import retrain_ticket

    return retrain_ticket(locked_part, data, cfg).test_acc
