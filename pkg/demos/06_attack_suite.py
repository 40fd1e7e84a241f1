"""
Attacking the mark, and the one-line defense
============================================

Removal attacks (extra pruning, mask noise) and ambiguity attacks
(region overwrite) against an embedded signature. The decode survives
pruning until the model itself is ruined; mask noise below the owner's
smallest surviving magnitude is stripped by a single threshold; and an
insider overwrite destroys the very accuracy worth stealing.
"""

import numpy as np

from ticketlock import (
    PruneSchedule,
    TrainConfig,
    embed,
    encode,
    imp_find_extreme_ticket,
    make_dataset,
    parse_arch,
    retrain_ticket,
)
from ticketlock.attacks import (
    AttackContext,
    attack_addon,
    attack_fake3,
    attack_prune,
    min_surviving_magnitude,
)

data = make_dataset("digits", 0)
cfg = TrainConfig(seed=0, epochs=12, milestones=(7, 10), weight_decay=0.0)
# cap the ladder so enough weights survive to host and compensate a mark
sched = PruneSchedule(ladder=(0.2, 0.1), round_limits=(4, 2))
result = imp_find_extreme_ticket(parse_arch("mlp:64-64-40-4"), data, cfg, sched)
embedded, record = embed(result.model, encode("tk01", "robust"), seed=100)
model = retrain_ticket(embedded, data, cfg).model
ctx = AttackContext(data=data, record=record, owner_text="tk01")

print("pruning attack (magnitude order):")
print("  ratio  accuracy  decode")
for ratio in (0.05, 0.1, 0.3, 0.5, 0.7, 0.85, 0.9):
    out = attack_prune(model, "omp", ratio, ctx=ctx)
    print(f"  {ratio:>5.0%}  {out.acc_after:>8.3f}  {'ok' if out.decode_ok else 'LOST'}")

print("\nmask-noise attack and the threshold defense:")
t = min_surviving_magnitude(model)
out = attack_addon(model, rate=0.1, noise_scale=0.5 * t, seed=1, ctx=ctx, defend_t=t)
print(f"  attacker reactivates {out.extra['n_added']} pruned weights "
      f"below t={t:.4f}: decode {'ok' if out.decode_ok else 'LOST'}")
print(f"  after defense: mask restored={out.defense['mask_restored']}, "
      f"decode ok={out.defense['decode_ok']}")

print("\ninsider region overwrite (no retraining):")
mags = np.concatenate(
    [np.abs(w)[m.to_array().astype(bool)] for w, m in zip(model.weights, model.masks)]
)
new_sig = encode("pwn", "robust", 4)
out = attack_fake3(model, new_sig, 12.0 * float(np.quantile(mags, 0.75)),
                   seed=2, record=record, ctx=ctx)
print(f"  accuracy {out.acc_before:.3f} -> {out.acc_after:.3f} "
      f"({(out.acc_before - out.acc_after) * 100:.1f}pt sacrificed to replace the mark)")
