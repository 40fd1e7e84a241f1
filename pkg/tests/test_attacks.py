"""Attack mechanics: budgets, accounting invariants, and defenses."""

import numpy as np
import pytest

from ticketlock import (
    PruneSchedule,
    TrainConfig,
    encode,
    imp_find_extreme_ticket,
    make_dataset,
    parse_arch,
)
from ticketlock.attacks import (
    ATTACK_KINDS,
    AttackContext,
    AttackError,
    AttackSpec,
    attack_addon,
    attack_fake1,
    attack_fake2,
    attack_fake3,
    attack_finetune,
    attack_prune,
    defend_addon,
    forge_key,
    min_surviving_magnitude,
)
from ticketlock.embed import embed
from ticketlock.keysplit import budget_to_count, split, split_models
from ticketlock.masks import is_submask, masks_disjoint, spar
from ticketlock.scoring import score_model

CFG = TrainConfig(epochs=5, milestones=(3,), rewind_epoch=1, seed=0, weight_decay=0.0)
SCHED = PruneSchedule(ladder=(0.2,), round_limits=(2,))


@pytest.fixture(scope="module")
def host():
    data = make_dataset("rings", 0)
    res = imp_find_extreme_ticket(parse_arch("mlp:2-48-48-4"), data, CFG, SCHED)
    sig = encode("at", "robust")
    emb, rec = embed(res.model, sig, seed=1)
    ctx = AttackContext(data=data, record=rec, owner_text="at")
    return dict(data=data, res=res, sig=sig, emb=emb, rec=rec, ctx=ctx)


def test_spec_validation():
    AttackSpec(kind="prune_omp", rate=0.5, seed=1)
    with pytest.raises(AttackError):
        AttackSpec(kind="nosuch")
    with pytest.raises(AttackError):
        AttackSpec(kind="prune_omp", rate=1.5)
    assert set(ATTACK_KINDS) == {
        "prune_omp", "prune_random", "finetune", "addon", "fake1", "fake2", "fake3",
    }


def test_prune_removes_exact_count(host):
    model = host["emb"]
    nnz = spar(model.masks).nnz
    for ratio in (0.05, 0.33):
        out = attack_prune(model, "omp", ratio, ctx=host["ctx"])
        assert spar(out.model.masks).nnz == nnz - int(ratio * nnz)
        assert out.spec.kind == "prune_omp"
        assert out.extra["n_removed"] == int(ratio * nnz)
    r = attack_prune(model, "random", 0.2, seed=3, ctx=host["ctx"])
    assert spar(r.model.masks).nnz == nnz - int(0.2 * nnz)
    with pytest.raises(AttackError):
        attack_prune(model, "nosuch", 0.1)
    with pytest.raises(AttackError):
        attack_prune(model, "omp", 1.2)


def test_prune_zero_ratio_is_identity(host):
    out = attack_prune(host["emb"], "omp", 0.0, ctx=host["ctx"])
    for a, b in zip(out.model.masks, host["emb"].masks):
        assert a.bits == b.bits
    assert out.acc_after == out.acc_before


def test_prune_deterministic(host):
    a = attack_prune(host["emb"], "random", 0.3, seed=9, ctx=host["ctx"])
    b = attack_prune(host["emb"], "random", 0.3, seed=9, ctx=host["ctx"])
    c = attack_prune(host["emb"], "random", 0.3, seed=10, ctx=host["ctx"])
    assert all(x.bits == y.bits for x, y in zip(a.model.masks, b.model.masks))
    assert any(x.bits != y.bits for x, y in zip(a.model.masks, c.model.masks))


def test_outcome_dict_schema(host):
    out = attack_prune(host["emb"], "omp", 0.1, ctx=host["ctx"])
    d = out.to_dict()
    assert d["schema_version"] == 1
    assert d["type"] == "attack"
    assert d["kind"] == "prune_omp"
    assert 0.0 <= d["spar_after"] <= 1.0
    assert isinstance(d["decode_ok"], bool)


def test_addon_accounting_exact(host):
    model = host["emb"]
    counts = spar(model.masks)
    pruned = counts.total - counts.nnz
    rate = 0.1
    out = attack_addon(model, rate=rate, noise_scale=0.05, seed=4, ctx=host["ctx"])
    n_add = int(rate * pruned)
    assert spar(out.model.masks).nnz == counts.nnz + n_add
    assert out.extra["n_added"] == n_add
    # original mask survives as a submask of the tampered one
    assert is_submask(model.masks, out.model.masks)


def test_addon_zero_rate_noop(host):
    out = attack_addon(host["emb"], rate=0.0, noise_scale=0.05, seed=4, ctx=host["ctx"])
    for a, b in zip(out.model.masks, host["emb"].masks):
        assert a.bits == b.bits


def test_fake2_is_relabelled_addon(host):
    a = attack_addon(host["emb"], rate=0.2, noise_scale=0.07, seed=5, ctx=host["ctx"])
    f = attack_fake2(host["emb"], rate=0.2, noise_scale=0.07, seed=5, ctx=host["ctx"])
    assert f.spec.kind == "fake2"
    for x, y in zip(a.model.masks, f.model.masks):
        assert x.bits == y.bits
    for x, y in zip(a.model.weights, f.model.weights):
        assert np.array_equal(x, y)


def test_defend_addon_restores_mask_bit_exact(host):
    model = host["emb"]
    t = min_surviving_magnitude(model)
    assert t > 0
    out = attack_addon(model, rate=0.1, noise_scale=0.5 * t, seed=6, ctx=host["ctx"], defend_t=t)
    d = out.defense
    assert d["t"] == t
    assert d["mask_restored"] is True
    assert d["residual"] == 0
    assert d["decode_ok"] is True
    assert d["decode_text"] == "at"


def test_defend_addon_on_clean_model_is_identity(host):
    model = host["emb"]
    t = min_surviving_magnitude(model)
    kept = defend_addon(model, t)
    for a, b in zip(kept.masks, model.masks):
        assert a.bits == b.bits


def test_defense_threshold_is_strict(host):
    # the cut is |w| < t, so nudging t above the smallest magnitude drops it
    model = host["emb"]
    t = min_surviving_magnitude(model)
    kept = defend_addon(model, t * (1.0 + 1e-6))
    assert spar(kept.masks).nnz < spar(model.masks).nnz


def test_finetune_freezes_masks(host):
    out = attack_finetune(host["emb"], host["data"], CFG, ctx=host["ctx"])
    for a, b in zip(out.model.masks, host["emb"].masks):
        assert a.bits == b.bits
    assert out.decode_ok
    assert "new_task_acc" in out.extra


def test_forge_key_size_equation(host):
    model = host["res"].model
    scores = score_model(model, "omp")
    nnz = sum(m.nnz for m in model.masks)
    budget = 0.10
    n = budget_to_count(budget, nnz)
    if n == 0:
        pytest.skip("host ticket too small for a 10% key")
    ks = split(model, scores, n)
    key, locked = split_models(model, ks)
    forged = forge_key(locked, budget, seed=7)
    nnz_locked = spar(locked.masks).nnz
    expected = int(budget * nnz_locked / (1.0 - budget))
    got = spar(forged.masks).nnz
    assert got == expected
    # a correct budget guess lands within rounding of the authentic key size
    assert abs(got - spar(key.masks).nnz) <= 1
    assert masks_disjoint(forged.masks, locked.masks)
    assert forged.meta.get("forged") is True
    with pytest.raises(AttackError):
        forge_key(locked, 1.0, seed=7)


def test_fake1_runs_and_reports_gap(host):
    model = host["res"].model
    scores = score_model(model, "omp")
    nnz = sum(m.nnz for m in model.masks)
    ks = split(model, scores, max(1, budget_to_count(0.10, nnz)))
    _, locked = split_models(model, ks)
    ref = host["res"].provenance.ticket_acc
    ctx = AttackContext(data=host["data"], owner_text="", reference_acc=ref)
    out = attack_fake1(locked, 0.10, 8, host["data"], CFG, ctx=ctx)
    assert 0.0 <= out.acc_after <= 1.0
    assert out.extra["gap"] == ref - out.acc_after
    assert out.match_ok == (out.extra["gap"] < ctx.eps_f)


def test_fake3_insider_overwrites_signature(host):
    new_sig = encode("zz", "robust")
    out = attack_fake3(
        host["emb"], new_sig, noise_scale=0.3, seed=9, record=host["rec"], ctx=host["ctx"]
    )
    assert out.extra["insider"] is True
    assert out.extra["new_sig_decodes"] is True
    # owner's text no longer sits at the recorded location
    assert not out.decode_ok or out.decode_text != "at"


def test_fake3_non_insider_uses_scan(host):
    new_sig = encode("zz", "robust")
    out = attack_fake3(host["emb"], new_sig, noise_scale=0.3, seed=10, record=None, ctx=host["ctx"])
    assert out.extra["insider"] is False
    assert out.extra["layer"] == host["rec"].layer


def test_fake3_rejects_mismatched_geometry(host):
    small = encode("a", "qr", version=1)  # 21x21, record says 29x29
    with pytest.raises(AttackError):
        attack_fake3(host["emb"], small, noise_scale=0.3, seed=11, record=host["rec"])
