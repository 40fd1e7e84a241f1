"""
Finding an extreme sparse ticket
================================

Iterative magnitude pruning with weight rewinding on a small synthetic
task. The search prunes in rounds, reverts any round whose retrained
accuracy falls behind the dense run, and finally probes whether removing
even 1% more weights breaks the match. A ticket that survives the probe
is "extreme": it cannot be pruned further without paying accuracy.
"""

from ticketlock import (
    PruneSchedule,
    TrainConfig,
    imp_find_extreme_ticket,
    make_dataset,
    parse_arch,
    retrain_ticket,
)

data = make_dataset("rings", 0)
arch = parse_arch("mlp:2-32-32-4")
cfg = TrainConfig(seed=0, epochs=15, milestones=(9, 12))

# ladder of prune ratios; each rung repeats until the match check fails
sched = PruneSchedule(ladder=(0.2, 0.1, 0.05, 0.1))

result = imp_find_extreme_ticket(arch, data, cfg, sched)
prov = result.provenance

print(f"round counts per rung : {prov.spec_string}")
print(f"dense accuracy        : {prov.dense_acc:.3f}")
print(f"ticket accuracy       : {prov.ticket_acc:.3f}")
print(f"surviving weights     : {prov.sparsity:.4f} of the dense net")
print(f"1% probe accuracy     : {prov.probe_acc:.3f}")
print(f"extreme               : {prov.is_extreme}")

# the ticket is self-contained: rewind checkpoint travels with the bundle,
# so anyone holding it can reproduce the accuracy from scratch
again = retrain_ticket(result.model, data, cfg)
print(f"independent retrain   : {again.test_acc:.3f}")
