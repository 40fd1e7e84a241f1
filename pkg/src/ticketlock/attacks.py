"""Removal and ambiguity attacks on locked sparse models, plus the defense.

Removal attacks try to erase the embedded credential (extra pruning,
fine-tuning on a new task). The add-on attack reactivates pruned positions
with small noise weights to perturb the mask topology; it is countered by
re-pruning weights whose magnitude falls below the owner's threshold t.
Ambiguity attacks forge credentials: fake1 forges a key mask at a guessed
budget, fake2 injects mask noise (identical to add-on), fake3 overwrites
the embedded region with the attacker's own signature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._rng import substream
from .codec import SignatureMatrix, decode, encode
from .data import Dataset, TriggerSet
from .embed import EmbedRecord, extract, rewrite_region, similarity_scan
from .imp import global_magnitude_prune, global_random_prune, retrain_ticket
from .masks import LayerMask
from .model import SparseModel, merge
from .train import TrainConfig, evaluate, train, trigger_accuracy

ATTACK_KINDS = ("prune_omp", "prune_random", "finetune", "addon", "fake1", "fake2", "fake3")
SCHEMA_VERSION = 1


class AttackError(ValueError):
    pass


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    rate: float = 0.0
    seed: int = 0
    data_id: str | None = None
    noise_scale: float | None = None

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise AttackError(f"unknown attack kind {self.kind!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise AttackError(f"rate must lie in [0, 1], got {self.rate}")


@dataclass(frozen=True)
class AttackContext:
    """Optional evaluation context threaded through attack runs."""

    data: Dataset | None = None
    trigger: TriggerSet | None = None
    record: EmbedRecord | None = None
    owner_text: str | None = None
    reference_acc: float | None = None
    eps_f: float = 0.01


@dataclass
class AttackOutcome:
    spec: AttackSpec
    model: SparseModel
    acc_before: float | None = None
    acc_after: float | None = None
    trigger_before: float | None = None
    trigger_after: float | None = None
    decode_ok: bool | None = None
    decode_text: str | None = None
    match_ok: bool | None = None
    defense: dict | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for a in (self.acc_before, self.acc_after, self.trigger_before, self.trigger_after):
            if a is not None and not 0.0 <= a <= 1.0:
                raise AttackError(f"accuracy {a} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "type": "attack",
            "kind": self.spec.kind,
            "rate": self.spec.rate,
            "seed": self.spec.seed,
            "noise_scale": self.spec.noise_scale,
            "acc_before": self.acc_before,
            "acc_after": self.acc_after,
            "trigger_before": self.trigger_before,
            "trigger_after": self.trigger_after,
            "decode_ok": self.decode_ok,
            "decode_text": self.decode_text,
            "match_ok": self.match_ok,
            "spar_after": self.model.sparsity().spar,
            "defense": self.defense,
            "extra": self.extra,
        }


def signature_status(model: SparseModel, record: EmbedRecord, owner_text: str | None):
    """(decode_ok, DecodeResult, raw bit-exact match against re-encoded owner text)."""
    got = extract(model, record)
    res = decode(got)
    decode_ok = bool(res.ok) and (owner_text is None or res.text == owner_text)
    raw_match = None
    if owner_text is not None:
        ref = encode(owner_text, got.geometry["profile"], got.geometry["version"])
        raw_match = bool(np.array_equal(got.matrix, ref.matrix))
    return decode_ok, res, raw_match


def _fill_eval(out: AttackOutcome, before: SparseModel, ctx: AttackContext | None) -> None:
    if ctx is None:
        return
    if ctx.data is not None:
        out.acc_before = evaluate(before, ctx.data)
        out.acc_after = evaluate(out.model, ctx.data)
    if ctx.trigger is not None:
        out.trigger_before = trigger_accuracy(before, ctx.trigger)
        out.trigger_after = trigger_accuracy(out.model, ctx.trigger)
    if ctx.record is not None:
        decode_ok, res, raw = signature_status(out.model, ctx.record, ctx.owner_text)
        out.decode_ok = decode_ok
        out.decode_text = res.text
        if out.match_ok is None:
            out.match_ok = raw


def attack_prune(
    model: SparseModel,
    method: str,
    ratio: float,
    seed: int = 0,
    ctx: AttackContext | None = None,
) -> AttackOutcome:
    """Remove exactly floor(ratio * nnz) surviving weights."""
    if method not in ("omp", "random"):
        raise AttackError(f"prune method must be omp or random, got {method!r}")
    if not 0.0 <= ratio <= 1.0:
        raise AttackError(f"ratio must lie in [0, 1], got {ratio}")
    nnz = sum(int(m.nnz) for m in model.masks)
    n_remove = int(ratio * nnz)
    if method == "omp":
        new_masks = global_magnitude_prune(model.weights, model.masks, n_remove)
    else:
        new_masks = global_random_prune(model.masks, n_remove, substream(seed, "attack:prune"))
    attacked = model.with_masks(new_masks, zero_pruned=True)
    spec = AttackSpec(kind=f"prune_{method}", rate=ratio, seed=seed)
    out = AttackOutcome(spec=spec, model=attacked)
    out.extra["n_removed"] = n_remove
    _fill_eval(out, model, ctx)
    return out


def attack_finetune(
    model: SparseModel,
    new_data: Dataset,
    cfg: TrainConfig,
    ctx: AttackContext | None = None,
) -> AttackOutcome:
    """Continue training on a different task; the mask stays frozen."""
    before_bits = [m.bits for m in model.masks]
    result = train(model, new_data, cfg)
    attacked = result.model
    after_bits = [m.bits for m in attacked.masks]
    if before_bits != after_bits:
        raise AttackError("fine-tuning altered the mask; training contract broken")
    spec = AttackSpec(kind="finetune", seed=cfg.seed, data_id=new_data.gen_id)
    out = AttackOutcome(spec=spec, model=attacked)
    out.extra["new_task_acc"] = result.test_acc
    _fill_eval(out, model, ctx)
    return out


def attack_addon(
    model: SparseModel,
    rate: float,
    noise_scale: float,
    seed: int = 0,
    ctx: AttackContext | None = None,
    defend_t: float | None = None,
    _kind: str = "addon",
) -> AttackOutcome:
    """Reactivate floor(rate * pruned) positions with Uniform(-s, +s) weights."""
    if not 0.0 <= rate <= 1.0:
        raise AttackError(f"rate must lie in [0, 1], got {rate}")
    masks = [m.to_array().astype(bool) for m in model.masks]
    weights = [w.copy() for w in model.weights]
    pruned = [np.argwhere(~m) for m in masks]
    n_pruned = sum(len(p) for p in pruned)
    n_add = int(rate * n_pruned)
    if n_add > n_pruned:
        raise AttackError("rate exceeds available pruned positions")
    rng = substream(seed, "attack:addon")
    pool = [(li, tuple(ix)) for li, p in enumerate(pruned) for ix in p]
    if n_add:
        pick = rng.choice(len(pool), size=n_add, replace=False)
        values = rng.uniform(-noise_scale, noise_scale, size=n_add)
        for pi, v in zip(pick, values):
            li, ix = pool[int(pi)]
            masks[li][ix] = True
            weights[li][ix] = v
    nnz_before = sum(int(m.nnz) for m in model.masks)
    attacked = model.with_weights(weights).with_masks(
        [LayerMask.from_array(m) for m in masks], zero_pruned=True
    )
    nnz_after = sum(int(m.nnz) for m in attacked.masks)
    if nnz_after != nnz_before + n_add:
        raise AttackError("add-on accounting violated")
    spec = AttackSpec(kind=_kind, rate=rate, seed=seed, noise_scale=noise_scale)
    out = AttackOutcome(spec=spec, model=attacked)
    out.extra["n_added"] = n_add
    _fill_eval(out, model, ctx)
    if defend_t is not None:
        defended = defend_addon(attacked, defend_t)
        restored = [m.bits for m in defended.masks] == [m.bits for m in model.masks]
        residual = sum(int(m.nnz) for m in defended.masks) - nnz_before
        defense = {"t": defend_t, "mask_restored": bool(restored), "residual": int(residual)}
        if ctx is not None and ctx.record is not None:
            d_ok, d_res, _ = signature_status(defended, ctx.record, ctx.owner_text)
            defense["decode_ok"] = d_ok
            defense["decode_text"] = d_res.text
        out.defense = defense
    return out


def min_surviving_magnitude(model: SparseModel) -> float:
    """Owner's defense threshold t: smallest surviving weight magnitude."""
    best = None
    for w, m in zip(model.weights, model.masks):
        sel = m.to_array().astype(bool)
        if sel.any():
            v = float(np.abs(w[sel]).min())
            best = v if best is None else min(best, v)
    if best is None:
        raise AttackError("model has no surviving weights")
    return best


def defend_addon(model: SparseModel, t: float) -> SparseModel:
    """Zero the mask wherever the surviving weight magnitude falls below t."""
    masks = []
    for w, m in zip(model.weights, model.masks):
        sel = m.to_array().astype(bool)
        keep = sel & ~(np.abs(w) < t)
        masks.append(LayerMask.from_array(keep))
    return model.with_masks(masks, zero_pruned=True)


def forge_key(locked: SparseModel, budget: float, seed: int) -> SparseModel:
    """Random key at the guessed budget, drawn from the locked model's holes.

    The forged count solves n = floor(budget * (nnz_locked + n)) so that a
    correct budget guess reproduces the authentic key size. Weights are
    standard normal scaled by 1/sqrt(fan_in of the layer).
    """
    if not 0.0 <= budget < 1.0:
        raise AttackError(f"budget must lie in [0, 1), got {budget}")
    nnz_locked = sum(int(m.nnz) for m in locked.masks)
    n_forge = int(budget * nnz_locked / (1.0 - budget))
    rng = substream(seed, "attack:fake1")
    masks = [np.zeros(m.shape, dtype=bool) for m in locked.masks]
    weights = [np.zeros_like(w) for w in locked.weights]
    pool = []
    for li, m in enumerate(locked.masks):
        holes = np.argwhere(~m.to_array().astype(bool))
        pool.extend((li, tuple(ix)) for ix in holes)
    if n_forge > len(pool):
        raise AttackError("budget exceeds available pruned positions")
    if n_forge:
        pick = rng.choice(len(pool), size=n_forge, replace=False)
        for pi in pick:
            li, ix = pool[int(pi)]
            masks[li][ix] = True
            weights[li][ix] = rng.standard_normal() / np.sqrt(locked.arch.layers[li].fan_in)
    return SparseModel(
        arch=locked.arch,
        weights=tuple(w.astype(np.float32) for w in weights),
        masks=tuple(LayerMask.from_array(m) for m in masks),
        biases=tuple(np.zeros_like(b) for b in locked.biases),
        init_weights=locked.init_weights,
        init_biases=locked.init_biases,
        meta={"forged": True, "budget": budget, "seed": seed},
    )


def attack_fake1(
    locked: SparseModel,
    budget: float,
    seed: int,
    data: Dataset,
    cfg: TrainConfig,
    ctx: AttackContext | None = None,
    forged: SparseModel | None = None,
) -> AttackOutcome:
    """Forge a key mask, merge with the locked part, rewind and retrain."""
    if forged is None:
        forged = forge_key(locked, budget, seed)
    merged = merge(forged, locked)
    result = retrain_ticket(merged, data, cfg)
    spec = AttackSpec(kind="fake1", rate=budget, seed=seed)
    out = AttackOutcome(spec=spec, model=result.model, acc_after=result.test_acc)
    if ctx is not None and ctx.reference_acc is not None:
        out.acc_before = ctx.reference_acc
        gap = ctx.reference_acc - result.test_acc
        out.match_ok = bool(gap < ctx.eps_f)
        out.extra["gap"] = gap
    if ctx is not None and ctx.record is not None:
        decode_ok, res, raw = signature_status(out.model, ctx.record, ctx.owner_text)
        out.decode_ok = decode_ok
        out.decode_text = res.text
    return out


def attack_fake2(
    model: SparseModel,
    rate: float,
    noise_scale: float,
    seed: int = 0,
    ctx: AttackContext | None = None,
    defend_t: float | None = None,
) -> AttackOutcome:
    """Mask-noise ambiguity attack; shares the add-on implementation."""
    return attack_addon(model, rate, noise_scale, seed, ctx, defend_t, _kind="fake2")


def attack_fake3(
    model: SparseModel,
    new_sig: SignatureMatrix,
    noise_scale: float,
    seed: int = 0,
    record: EmbedRecord | None = None,
    ctx: AttackContext | None = None,
) -> AttackOutcome:
    """Overwrite the embedded region (insider knows where) with a new signature."""
    if record is not None:
        layer, offset = record.layer, record.offset
        if new_sig.geometry["size"] != record.geometry["size"]:
            raise AttackError("replacement signature dimensions differ from the record")
        insider = True
    else:
        layer, offset, _ = similarity_scan(model, new_sig)
        insider = False
    rng_sampler = lambda rng, n: rng.uniform(-noise_scale, noise_scale, size=n)
    attacked, changed = rewrite_region(
        model, layer, offset, new_sig.matrix, seed, weight_sampler=rng_sampler
    )
    spec = AttackSpec(kind="fake3", seed=seed, noise_scale=noise_scale)
    out = AttackOutcome(spec=spec, model=attacked)
    out.extra["insider"] = insider
    out.extra["layer"] = layer
    out.extra["offset"] = list(offset)
    out.extra["bits_changed"] = changed
    new_rec = EmbedRecord(
        layer=layer, offset=offset, geometry=dict(new_sig.geometry), similarity=1.0,
        bits_changed=changed,
    )
    new_res = decode(extract(attacked, new_rec))
    out.extra["new_sig_decodes"] = bool(new_res.ok)
    _fill_eval(out, model, ctx)
    return out
