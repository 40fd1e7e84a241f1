"""Iterative magnitude pruning with rewinding and an extremality probe.

The search walks a ladder of pruning ratios. Each round removes the
globally smallest surviving weights (by magnitude of the trained values),
rewinds the rest to an early checkpoint, and retrains. A round that breaks
the accuracy match is reverted and the ladder advances to its next ratio.
After the ladder is exhausted, a final probe prunes a further small
fraction; the ticket is certified extreme only if that probe fails the
match.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .data import Dataset, TriggerSet
from .masks import LayerMask
from .model import Architecture, SparseModel, init_model
from .train import TrainConfig, TrainResult, train


@dataclass(frozen=True)
class PruneSchedule:
    ladder: tuple[float, ...] = (0.2, 0.1, 0.05, 0.1)
    round_limits: Optional[tuple[int, ...]] = None
    match_margin: float = 0.01
    probe_ratio: float = 0.01
    two_sided: bool = False
    max_rounds: int = 64

    def __post_init__(self):
        if not self.ladder or not all(0.0 < r < 1.0 for r in self.ladder):
            raise ValueError("ladder ratios must lie in (0, 1)")
        if self.round_limits is not None and len(self.round_limits) != len(self.ladder):
            raise ValueError("round_limits must align with the ladder")
        if self.probe_ratio <= 0:
            raise ValueError("probe ratio must be positive")

    def limit(self, k: int) -> int:
        if self.round_limits is None:
            return self.max_rounds
        return self.round_limits[k]

    def matches(self, acc: float, reference: float) -> bool:
        if self.two_sided:
            return abs(acc - reference) <= self.match_margin
        return acc >= reference - self.match_margin


@dataclass(frozen=True)
class TicketProvenance:
    round_counts: tuple[int, ...]
    dense_acc: float
    ticket_acc: float
    sparsity: float
    probe_acc: Optional[float]
    is_extreme: bool
    history: tuple[dict, ...]

    @property
    def spec_string(self) -> str:
        """Round counts per ladder ratio, e.g. \"(5,1,8,1)\"."""
        return "(" + ",".join(str(c) for c in self.round_counts) + ")"

    def to_dict(self) -> dict:
        return {
            "round_counts": list(self.round_counts),
            "spec_string": self.spec_string,
            "dense_acc": self.dense_acc,
            "ticket_acc": self.ticket_acc,
            "sparsity": self.sparsity,
            "probe_acc": self.probe_acc,
            "is_extreme": self.is_extreme,
            "history": [dict(h) for h in self.history],
        }


@dataclass(frozen=True)
class TicketResult:
    model: SparseModel
    provenance: TicketProvenance
    dense: TrainResult


def global_magnitude_prune(
    weights: Sequence[np.ndarray],
    masks: Sequence[LayerMask],
    n_remove: int,
) -> list[LayerMask]:
    """Zero the n_remove smallest-magnitude surviving positions globally.

    Ties break deterministically by (layer, row-major index) via stable sort.
    """
    mask_arrays = [m.to_array().astype(bool) for m in masks]
    nnz = int(sum(int(m.sum()) for m in mask_arrays))
    if n_remove < 0 or n_remove > nnz:
        raise ValueError(f"cannot remove {n_remove} of {nnz} surviving weights")
    if n_remove == 0:
        return list(masks)
    mags = np.concatenate(
        [np.abs(np.asarray(w, dtype=np.float64)[m]) for w, m in zip(weights, mask_arrays)]
    )
    drop_local = np.argsort(mags, kind="stable")[:n_remove]
    # map positions within the surviving subset back to flat per-layer indices
    surv_flat = np.concatenate(
        [np.flatnonzero(m.reshape(-1)) + off for m, off in _layer_offsets(mask_arrays)]
    )
    drop_global = surv_flat[drop_local]
    out = []
    for m, (_, off) in zip(mask_arrays, _layer_offsets(mask_arrays)):
        flat = m.reshape(-1).copy()
        size = flat.size
        local = drop_global[(drop_global >= off) & (drop_global < off + size)] - off
        flat[local] = 0
        out.append(LayerMask.from_array(flat.reshape(m.shape)))
    return out


def global_random_prune(
    masks: Sequence[LayerMask],
    n_remove: int,
    rng: np.random.Generator,
) -> list[LayerMask]:
    """Zero n_remove surviving positions chosen uniformly at random."""
    mask_arrays = [m.to_array().astype(bool) for m in masks]
    nnz = int(sum(int(m.sum()) for m in mask_arrays))
    if n_remove < 0 or n_remove > nnz:
        raise ValueError(f"cannot remove {n_remove} of {nnz} surviving weights")
    surv_flat = np.concatenate(
        [np.flatnonzero(m.reshape(-1)) + off for m, off in _layer_offsets(mask_arrays)]
    )
    drop_global = rng.choice(surv_flat, size=n_remove, replace=False)
    out = []
    for m, (_, off) in zip(mask_arrays, _layer_offsets(mask_arrays)):
        flat = m.reshape(-1).copy()
        size = flat.size
        local = drop_global[(drop_global >= off) & (drop_global < off + size)] - off
        flat[local] = 0
        out.append(LayerMask.from_array(flat.reshape(m.shape)))
    return out


def _layer_offsets(mask_arrays: Sequence[np.ndarray]):
    off = 0
    pairs = []
    for m in mask_arrays:
        pairs.append((m, off))
        off += m.size
    return pairs


def rewound(model: SparseModel) -> SparseModel:
    """Copy of the model reset to its rewind checkpoint under the current mask."""
    if model.init_weights is None or model.init_biases is None:
        raise ValueError("model carries no rewind checkpoint")
    weights = tuple(
        (iw * m.to_array()).astype(np.float32)
        for iw, m in zip(model.init_weights, model.masks)
    )
    return replace(model, weights=weights, biases=tuple(b.copy() for b in model.init_biases))


def retrain_ticket(
    model: SparseModel,
    data: Dataset,
    cfg: TrainConfig,
    trigger: Optional[TriggerSet] = None,
) -> TrainResult:
    """Retrain from the rewind checkpoint with the model's masks frozen."""
    return train(rewound(model), data, cfg, trigger=trigger)


def imp_find_extreme_ticket(
    arch: Architecture,
    data: Dataset,
    cfg: TrainConfig,
    sched: PruneSchedule = PruneSchedule(),
) -> TicketResult:
    """Train-prune-retrain search; returns the sparsest matching ticket.

    The returned model stores the dense run's rewind checkpoint in
    init_weights/init_biases so it can be retrained or split later.
    """
    dense_model = init_model(arch, cfg.seed)
    dense = train(dense_model, data, cfg)
    dense_acc = dense.test_acc

    cur_masks = list(dense_model.masks)
    cur_weights = list(dense.model.weights)
    cur_biases = list(dense.model.biases)
    cur_acc = dense_acc
    rewind_w, rewind_b = dense.rewind_weights, dense.rewind_biases

    counts = [0] * len(sched.ladder)
    history: list[dict] = []
    k = 0
    rounds = 0
    while k < len(sched.ladder) and rounds < sched.max_rounds:
        if counts[k] >= sched.limit(k):
            history.append({"ratio": sched.ladder[k], "event": "limit", "rounds": counts[k]})
            k += 1
            continue
        nnz = sum(int(m.nnz) for m in cur_masks)
        n_remove = int(sched.ladder[k] * nnz)
        if n_remove == 0:
            history.append({"ratio": sched.ladder[k], "event": "skip", "nnz": nnz})
            k += 1
            continue
        rounds += 1
        cand_masks = global_magnitude_prune(cur_weights, cur_masks, n_remove)
        candidate = SparseModel(
            arch=arch,
            weights=tuple((w * m.to_array()).astype(np.float32) for w, m in zip(rewind_w, cand_masks)),
            masks=tuple(cand_masks),
            biases=tuple(b.copy() for b in rewind_b),
            init_weights=rewind_w,
            init_biases=rewind_b,
            meta=dict(dense_model.meta),
        )
        res = train(candidate, data, cfg)
        ok = sched.matches(res.test_acc, dense_acc)
        history.append(
            {
                "ratio": sched.ladder[k],
                "event": "accept" if ok else "revert",
                "nnz": nnz - n_remove,
                "acc": res.test_acc,
            }
        )
        if ok:
            counts[k] += 1
            cur_masks = cand_masks
            cur_weights = list(res.model.weights)
            cur_biases = list(res.model.biases)
            cur_acc = res.test_acc
        else:
            k += 1

    # extremality probe: a further small prune must break the match
    probe_acc: Optional[float] = None
    is_extreme = False
    nnz = sum(int(m.nnz) for m in cur_masks)
    n_probe = max(1, int(sched.probe_ratio * nnz))
    if n_probe <= nnz and any(c > 0 for c in counts):
        probe_masks = global_magnitude_prune(cur_weights, cur_masks, n_probe)
        probe_model = SparseModel(
            arch=arch,
            weights=tuple((w * m.to_array()).astype(np.float32) for w, m in zip(rewind_w, probe_masks)),
            masks=tuple(probe_masks),
            biases=tuple(b.copy() for b in rewind_b),
            init_weights=rewind_w,
            init_biases=rewind_b,
        )
        probe_acc = train(probe_model, data, cfg).test_acc
        is_extreme = not sched.matches(probe_acc, dense_acc)
        history.append(
            {"ratio": sched.probe_ratio, "event": "probe", "acc": probe_acc, "extreme": is_extreme}
        )

    ticket = SparseModel(
        arch=arch,
        weights=tuple(np.asarray(w, dtype=np.float32) for w in cur_weights),
        masks=tuple(cur_masks),
        biases=tuple(np.asarray(b, dtype=np.float32) for b in cur_biases),
        init_weights=rewind_w,
        init_biases=rewind_b,
        meta=dict(dense_model.meta),
    )
    prov = TicketProvenance(
        round_counts=tuple(counts),
        dense_acc=dense_acc,
        ticket_acc=cur_acc,
        sparsity=ticket.sparsity().spar,
        probe_acc=probe_acc,
        is_extreme=is_extreme,
        history=tuple(history),
    )
    ticket = replace(ticket, meta={**ticket.meta, "provenance": prov.to_dict()})
    return TicketResult(model=ticket, provenance=prov, dense=dense)
