"""
Remote verification through a prediction interface
==================================================

When the suspect model sits behind an API, ownership is probed with a
trigger set: off-manifold inputs with fixed random labels that the owner
interleaved into training. The genuine model answers them near-perfectly;
an independent model answers near chance. A flagged probe escalates to
the white-box decode when the weights can be subpoenaed.
"""

from ticketlock import (
    PruneSchedule,
    TrainConfig,
    embed,
    encode,
    imp_find_extreme_ticket,
    make_dataset,
    make_trigger_set,
    parse_arch,
    retrain_ticket,
)
from ticketlock.verify import model_predict_fn, run_scheme, verify_blackbox

data = make_dataset("digits", 0)
cfg = TrainConfig(seed=0, epochs=12, milestones=(7, 10), weight_decay=0.0)
# cap the ladder so enough weights survive to host and compensate a mark
sched = PruneSchedule(ladder=(0.2, 0.1), round_limits=(4, 2))
result = imp_find_extreme_ticket(parse_arch("mlp:64-64-40-4"), data, cfg, sched)

embedded, record = embed(result.model, encode("tk01", "robust"), seed=100)
trigger = make_trigger_set(300, data.n_classes, data.input_shape, size=64)
owned = retrain_ticket(embedded, data, cfg, trigger=trigger)
print(f"owner's model: task accuracy {owned.test_acc:.3f}, "
      f"trigger accuracy {owned.trigger_acc:.3f}")

# the verifier only sees a batch-in, labels-out interface
probe = verify_blackbox(model_predict_fn(owned.model), trigger)
print(f"probe on the owned model : {probe['status']} "
      f"(trigger accuracy {probe['trigger_acc']:.2f}, threshold {probe['threshold']:.2f})")

# negative control: same architecture, trained without the trigger set
control = retrain_ticket(result.model, data, cfg)
probe = verify_blackbox(model_predict_fn(control.model), trigger)
print(f"probe on a control model : {probe['status']} "
      f"(trigger accuracy {probe['trigger_acc']:.2f})")

# full scheme: black-box flag, then escalation to the embedded signature
report = run_scheme(
    "v3", model=owned.model, trigger=trigger, expected="tk01", record=record
)
print(f"scheme v3 verdict        : {report.verdict} "
      f"(white-box decoded {report.whitebox['decoded']!r})")
