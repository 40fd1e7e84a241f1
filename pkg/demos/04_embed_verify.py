"""
Embedding a signature in the mask topology
==========================================

The signature matrix is written into a rectangular region of one layer's
pruning mask: dark bits keep weights, light bits lose them. Sparsity is
compensated elsewhere so the global surviving count does not move, and
the rewind checkpoint is updated so retraining keeps the region alive.
Ownership is then checked by extracting the region and decoding it.
"""

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
from ticketlock.codec import decode
from ticketlock.embed import blind_scan, extract
from ticketlock.masks import spar
from ticketlock.verify import run_scheme

data = make_dataset("digits", 0)
cfg = TrainConfig(seed=0, epochs=12, milestones=(7, 10), weight_decay=0.0)
# cap the ladder so enough weights survive to host and compensate a mark
sched = PruneSchedule(ladder=(0.2, 0.1), round_limits=(4, 2))
result = imp_find_extreme_ticket(parse_arch("mlp:64-64-40-4"), data, cfg, sched)
ticket = result.model

sig = encode("tk01", "robust")
embedded, record = embed(ticket, sig, seed=100)
print(f"embedded {sig.geometry['size']}x{sig.geometry['size']} signature at "
      f"layer {record.layer}, offset {record.offset} "
      f"({record.bits_changed} mask bits changed)")
print(f"sparsity before {spar(ticket.masks).spar:.4f} / after {spar(embedded.masks).spar:.4f}")

# retraining from the (updated) checkpoint keeps both accuracy and the mark
trained = retrain_ticket(embedded, data, cfg)
print(f"retrained accuracy: {trained.test_acc:.3f} "
      f"(plain ticket: {retrain_ticket(ticket, data, cfg).test_acc:.3f})")

res = decode(extract(trained.model, record))
print(f"extracted after retraining -> {res.text!r} ({res.symbol_errors} symbol errors)")

# no record needed: scanning every window of every layer finds it too
hits = blind_scan(trained.model, sig.geometry)
print(f"blind scan: {[(h.layer, h.offset, h.result.text) for h in hits]}")

# the white-box scheme wraps this into a signed-off report
report = run_scheme("v2", model=trained.model, expected="tk01", record=record)
print(f"verification verdict: {report.verdict}")
