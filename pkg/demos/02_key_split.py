"""
Splitting a ticket into a key and a locked model
================================================

A small fraction of the surviving weights, chosen by an importance score,
acts as a key: without it the remaining "locked" model retrains far below
the ticket's accuracy, and a forged key of the right size does not close
the gap. Merging the authentic halves is bit-exact.
"""

import numpy as np

from ticketlock import (
    TrainConfig,
    imp_find_extreme_ticket,
    make_dataset,
    parse_arch,
    retrain_ticket,
)
from ticketlock.attacks import forge_key
from ticketlock.keysplit import budget_to_count, split, split_models
from ticketlock.model import merge
from ticketlock.scoring import score_model

data = make_dataset("rings", 0)
cfg = TrainConfig(seed=5, epochs=15, milestones=(9, 12))
result = imp_find_extreme_ticket(parse_arch("mlp:2-32-32-4"), data, cfg)
ticket = result.model
ticket_acc = result.provenance.ticket_acc

# score every surviving weight, keep the top 10% as the key
scores = score_model(ticket, "omp")
nnz = sum(int(m.nnz) for m in ticket.masks)
n = budget_to_count(0.10, nnz)
ks = split(ticket, scores, n)
key, locked = split_models(ticket, ks)
print(f"key holds {ks.realized} of {nnz} weights (threshold {ks.threshold:.4f})")

# the merged halves reproduce the ticket bit for bit
back = merge(key, locked)
assert all(np.array_equal(a, b) for a, b in zip(back.weights, ticket.weights))
print("merge(key, locked) == ticket: True")

locked_acc = retrain_ticket(locked, data, cfg).test_acc
print(f"ticket accuracy        : {ticket_acc:.3f}")
print(f"locked alone, retrained: {locked_acc:.3f}  (gap {ticket_acc - locked_acc:+.3f})")

# an attacker who guesses the budget still lacks the positions
forged = forge_key(locked, 0.10, seed=99)
fake_acc = retrain_ticket(merge(forged, locked), data, cfg).test_acc
print(f"forged key, retrained  : {fake_acc:.3f}  (gap {ticket_acc - fake_acc:+.3f})")
