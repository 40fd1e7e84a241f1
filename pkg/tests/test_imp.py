"""Iterative pruning search: ladders, limits, provenance, determinism."""

import numpy as np
import pytest

from ticketlock import (
    PruneSchedule,
    TrainConfig,
    imp_find_extreme_ticket,
    init_model,
    make_dataset,
    parse_arch,
)
from ticketlock._rng import substream
from ticketlock.imp import global_magnitude_prune, global_random_prune, retrain_ticket, rewound
from ticketlock.masks import LayerMask, is_submask, spar

FAST = TrainConfig(epochs=4, milestones=(2,), rewind_epoch=1, seed=0)


def _weights_and_masks(seed=0, density=0.8):
    model = init_model(parse_arch("mlp:6-8-8-4"), seed)
    rng = np.random.default_rng(seed)
    masks = [LayerMask.from_array(rng.random(w.shape) < density) for w in model.weights]
    weights = [w * m.to_array() for w, m in zip(model.weights, masks)]
    return weights, masks


def test_magnitude_prune_removes_exactly_n_lowest():
    weights, masks = _weights_and_masks()
    nnz = sum(m.nnz for m in masks)
    n = 17
    out = global_magnitude_prune(weights, masks, n)
    assert sum(m.nnz for m in out) == nnz - n
    assert is_submask(out, masks)
    # surviving magnitudes all >= pruned magnitudes
    removed, kept = [], []
    for w, old, new in zip(weights, masks, out):
        gone = old.to_array().astype(bool) & ~new.to_array().astype(bool)
        stay = new.to_array().astype(bool)
        removed.extend(np.abs(w[gone]).tolist())
        kept.extend(np.abs(w[stay]).tolist())
    assert max(removed) <= min(kept) + 1e-12


def test_magnitude_prune_n_zero_is_identity():
    weights, masks = _weights_and_masks()
    out = global_magnitude_prune(weights, masks, 0)
    for a, b in zip(out, masks):
        assert a.bits == b.bits


def test_random_prune_counts_and_determinism():
    weights, masks = _weights_and_masks()
    nnz = sum(m.nnz for m in masks)
    a = global_random_prune(masks, 11, substream(5, "attack:prune"))
    b = global_random_prune(masks, 11, substream(5, "attack:prune"))
    c = global_random_prune(masks, 11, substream(6, "attack:prune"))
    assert sum(m.nnz for m in a) == nnz - 11
    assert all(x.bits == y.bits for x, y in zip(a, b))
    assert any(x.bits != y.bits for x, y in zip(a, c))
    assert is_submask(a, masks)


def test_rewound_resets_to_checkpoint_under_mask():
    data = make_dataset("rings", 0)
    res = imp_find_extreme_ticket(
        parse_arch("mlp:2-8-8-4"), data, FAST, PruneSchedule(ladder=(0.2,), round_limits=(1,))
    )
    rw = rewound(res.model)
    for w, iw, mk in zip(rw.weights, res.model.init_weights, res.model.masks):
        assert np.array_equal(w, (iw * mk.to_array()).astype(np.float32))


def test_round_limits_cap_sparsity():
    data = make_dataset("rings", 0)
    sched = PruneSchedule(ladder=(0.2, 0.1), round_limits=(2, 1))
    res = imp_find_extreme_ticket(parse_arch("mlp:2-16-16-4"), data, FAST, sched)
    floor = 0.8 * 0.8 * 0.9
    assert res.provenance.sparsity >= floor - 1e-6
    assert res.provenance.round_counts[0] <= 2
    assert res.provenance.round_counts[1] <= 1


def test_provenance_spec_string():
    data = make_dataset("rings", 0)
    sched = PruneSchedule(ladder=(0.2, 0.1), round_limits=(1, 1))
    res = imp_find_extreme_ticket(parse_arch("mlp:2-8-8-4"), data, FAST, sched)
    s = res.provenance.spec_string
    assert s.startswith("(") and s.endswith(")")
    assert tuple(int(x) for x in s[1:-1].split(",")) == res.provenance.round_counts


def test_zero_accepted_rounds_is_not_extreme():
    # an impossible match margin forces every prune round to revert
    data = make_dataset("rings", 0)
    sched = PruneSchedule(ladder=(0.5,), round_limits=(2,), match_margin=-1.0)
    res = imp_find_extreme_ticket(parse_arch("mlp:2-8-8-4"), data, FAST, sched)
    assert res.provenance.round_counts == (0,)
    assert not res.provenance.is_extreme
    assert res.provenance.probe_acc is None
    assert spar(res.model.masks).spar == 1.0


def test_search_is_deterministic():
    data = make_dataset("rings", 0)
    sched = PruneSchedule(ladder=(0.2,), round_limits=(2,))
    r1 = imp_find_extreme_ticket(parse_arch("mlp:2-8-8-4"), data, FAST, sched)
    r2 = imp_find_extreme_ticket(parse_arch("mlp:2-8-8-4"), data, FAST, sched)
    assert r1.provenance == r2.provenance
    for a, b in zip(r1.model.masks, r2.model.masks):
        assert a.bits == b.bits


def test_retrain_ticket_starts_from_checkpoint():
    data = make_dataset("rings", 0)
    res = imp_find_extreme_ticket(
        parse_arch("mlp:2-8-8-4"), data, FAST, PruneSchedule(ladder=(0.2,), round_limits=(1,))
    )
    tr = retrain_ticket(res.model, data, FAST)
    for w, mk in zip(tr.model.weights, res.model.masks):
        assert np.all(w[mk.to_array() == 0] == 0.0)
    assert 0.0 <= tr.test_acc <= 1.0
