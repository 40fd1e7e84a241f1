"""End-to-end release gate: one test per numbered criterion.

Every criterion reruns its full pipeline from pinned seeds and asserts the
agreed tolerance, so ``pytest -v`` prints exactly one pass/fail line per
criterion. Shared pipelines are cached in conftest; nothing here mutates
them.
"""

import io
import json
import string

import numpy as np

from ticketlock import retrain_ticket
from ticketlock._rng import substream
from ticketlock.attacks import (
    AttackContext,
    attack_addon,
    attack_fake3,
    attack_finetune,
    attack_prune,
    forge_key,
    min_surviving_magnitude,
)
from ticketlock.cli import dispatch
from ticketlock.codec import damage, decode, encode
from ticketlock.data import make_dataset, make_trigger_set
from ticketlock.imp import global_magnitude_prune
from ticketlock.keysplit import budget_to_count, split, split_models
from ticketlock.masks import LayerMask, is_submask, mask_or, masks_disjoint, rspar, spar
from ticketlock.model import merge
from ticketlock.scoring import (
    SCORERS,
    betweenness_edge_scores,
    build_layered_graph,
    ewp_edge_scores,
    score_model,
)
from ticketlock.train import evaluate, trigger_accuracy
from ticketlock.verify import model_predict_fn, verify_blackbox, verify_whitebox

from conftest import OWNER_TEXT, digits_pipeline, rings_ticket
from test_scoring import betweenness_oracle, ewp_oracle, random_sparse_model


def test_criterion_01_mask_metrics_match_brute_force():
    rng = substream(101, "accept")
    for _ in range(500):
        n_layers = int(rng.integers(1, 4))
        arrs = [
            (rng.random(tuple(rng.integers(2, 7, size=2))) < rng.uniform(0.2, 0.9))
            for _ in range(n_layers)
        ]
        masks = [LayerMask.from_array(a) for a in arrs]
        # brute-force recount, element by element
        want_nnz = sum(1 for a in arrs for v in a.flat if v)
        want_total = sum(a.size for a in arrs)
        got = spar(masks)
        assert got.nnz == want_nnz and got.total == want_total
        assert got.spar == want_nnz / want_total
        sub_arrs = [a & (rng.random(a.shape) < 0.7) for a in arrs]
        subs = [LayerMask.from_array(a) for a in sub_arrs]
        assert is_submask(subs, masks) is True
        want_sub = all(
            not (bool(x) and not bool(y))
            for sa, a in zip(sub_arrs, arrs)
            for x, y in zip(sa.flat, a.flat)
        )
        assert want_sub is True
        if spar(masks).nnz:
            ref = spar(subs).spar / spar(masks).spar if spar(masks).spar else 0.0
            assert abs(rspar(subs, masks) - ref) < 1e-9
        assert masks_disjoint(subs, masks) == all(
            not (bool(x) and bool(y))
            for sa, a in zip(sub_arrs, arrs)
            for x, y in zip(sa.flat, a.flat)
        )
        union = mask_or(subs, masks)
        assert all(u.bits == m.bits for u, m in zip(union, masks))
    print("[criterion 1] PASS mask metrics == brute force on 500 mask sets")


def test_criterion_02_scores_match_exhaustive_oracles():
    rng = substream(102, "accept")
    checked = 0
    while checked < 100:
        model = random_sparse_model(rng)
        graph = build_layered_graph(model)
        n_edges = sum(len(w) for w in graph.edges_w)
        if n_edges == 0 or n_edges > 20:
            continue
        for g, w in zip(ewp_edge_scores(graph), ewp_oracle(graph)):
            assert np.allclose(g, w, rtol=1e-9, atol=1e-12)
        checked += 1
    checked = 0
    while checked < 100:
        model = random_sparse_model(rng)
        graph = build_layered_graph(model)
        if graph.n_nodes > 30 or sum(len(w) for w in graph.edges_w) == 0:
            continue
        for g, w in zip(betweenness_edge_scores(graph), betweenness_oracle(graph)):
            assert np.allclose(g, w, atol=1e-9)
        checked += 1
    print("[criterion 2] PASS path-product and centrality scores == oracles, 100 graphs each")


def test_criterion_03_split_merge_partitions_exactly():
    rng = substream(103, "accept")
    checked = 0
    while checked < 200:
        model = random_sparse_model(rng, density=float(rng.uniform(0.3, 0.9)))
        nnz = sum(int(m.nnz) for m in model.masks)
        if nnz < 2:
            continue
        method = SCORERS[int(rng.integers(len(SCORERS)))]
        scores = score_model(model, method, seed=int(rng.integers(1000)))
        n = int(rng.integers(1, nnz + 1))
        ks = split(model, scores, n)
        assert masks_disjoint(ks.key_masks, ks.locked_masks)
        union = mask_or(ks.key_masks, ks.locked_masks)
        assert all(u.bits == m.bits for u, m in zip(union, model.masks))
        assert spar(ks.key_masks).nnz + spar(ks.locked_masks).nnz == nnz
        assert spar(ks.key_masks).nnz == ks.realized <= n
        key, locked = split_models(model, ks)
        back = merge(key, locked)
        for wa, wb in zip(back.weights, model.weights):
            assert np.array_equal(wa, wb)
        for ma, mb in zip(back.masks, model.masks):
            assert ma.bits == mb.bits
        for ia, ib in zip(back.init_weights, model.init_weights):
            assert np.array_equal(ia, ib)
        checked += 1
    print("[criterion 3] PASS key/locked partition + bit-exact merge on 200 random cases")


def test_criterion_04_search_finds_extreme_ticket():
    rt = rings_ticket(0)
    res, data, cfg = rt["res"], rt["data"], rt["cfg"]
    prov = res.provenance
    assert prov.sparsity <= 0.3
    match = retrain_ticket(res.model, data, cfg)
    assert abs(prov.dense_acc - match.test_acc) < 0.01
    nnz = sum(int(m.nnz) for m in res.model.masks)
    probed_masks = global_magnitude_prune(
        res.model.weights, res.model.masks, max(1, int(0.01 * nnz))
    )
    probed = res.model.with_masks(probed_masks, zero_pruned=True)
    probe = retrain_ticket(probed, data, cfg)
    assert probe.test_acc < prov.dense_acc - 0.01
    assert prov.is_extreme is True
    print(
        f"[criterion 4] PASS spar={prov.sparsity:.4f} dense={prov.dense_acc:.3f} "
        f"retrain={match.test_acc:.3f} probe={probe.test_acc:.3f}"
    )


def test_criterion_05_locked_model_needs_its_key():
    gaps, fgaps = [], []
    for seed in range(5, 10):
        rt = rings_ticket(seed)
        res, data, cfg = rt["res"], rt["data"], rt["cfg"]
        model = res.model
        scores = score_model(model, "omp")
        nnz = sum(int(m.nnz) for m in model.masks)
        ks = split(model, scores, budget_to_count(0.10, nnz))
        _, locked = split_models(model, ks)
        locked_acc = retrain_ticket(locked, data, cfg).test_acc
        gaps.append(res.provenance.ticket_acc - locked_acc)
        forged = forge_key(locked, 0.10, seed)
        fake_acc = retrain_ticket(merge(forged, locked), data, cfg).test_acc
        fgaps.append(res.provenance.ticket_acc - fake_acc)
    assert float(np.mean(gaps)) > 0.01
    assert float(np.mean(fgaps)) > 0.01
    print(
        f"[criterion 5] PASS mean key-removal gap={np.mean(gaps):.3f} "
        f"mean forged-key gap={np.mean(fgaps):.3f} over seeds 5..9"
    )


def test_criterion_06_codec_roundtrip_and_damage_tolerance():
    rng = substream(106, "accept")
    alphabet = string.ascii_letters + string.digits + " .-"
    texts = [
        "".join(alphabet[int(i)] for i in rng.integers(0, len(alphabet), size=int(rng.integers(1, 9))))
        for _ in range(100)
    ]
    ok_clean = ok_damaged = rejected = 0
    for text in texts:
        sig = encode(text, "robust")
        if decode(sig).text == text:
            ok_clean += 1
        light = decode(damage(sig, 0.2, rng))
        if light.ok and light.text == text:
            ok_damaged += 1
        heavy = decode(damage(sig, 0.5, rng))
        if not heavy.ok or heavy.text != text:
            rejected += 1
    assert ok_clean == 100
    assert ok_damaged >= 95
    assert rejected >= 95
    print(
        f"[criterion 6] PASS roundtrip {ok_clean}/100, 20% damage {ok_damaged}/100 ok, "
        f"50% damage {rejected}/100 rejected"
    )


def test_criterion_07_embedding_is_cheap_and_sparsity_neutral():
    costs, spar_deltas = [], []
    for seed in range(5):
        p = digits_pipeline(seed)
        spar_deltas.append(
            abs(spar(p["emb"].masks).spar - spar(p["res"].model.masks).spar)
        )
        costs.append(p["plain"].test_acc - p["emb_tr"].test_acc)
    assert max(spar_deltas) < 1e-9
    assert max(costs) <= 0.01
    print(
        f"[criterion 7] PASS retrain cost max={max(costs) * 100:+.2f}pt "
        f"spar drift max={max(spar_deltas):.1e} over seeds 0..4"
    )


def test_criterion_08_signature_outlives_useful_accuracy():
    ratios = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95)
    fail_points = []
    for seed in range(5):
        p = digits_pipeline(seed)
        model = p["emb_tr"].model
        ctx = AttackContext(data=p["data"], record=p["rec"], owner_text=OWNER_TEXT)
        base = evaluate(model, p["data"])
        first_fail = None
        for r in ratios:
            out = attack_prune(model, "omp", r, ctx=ctx)
            if r in (0.05, 0.1):
                assert out.decode_ok, f"decode lost at {r:.0%} pruning (seed {seed})"
            if not out.decode_ok:
                first_fail = (r, base - out.acc_after)
                break
        assert first_fail is not None, f"decode never failed up to 95% (seed {seed})"
        ratio, drop = first_fail
        assert drop > 0.05, f"seed {seed}: decode died at {ratio:.0%} with only {drop:.3f} drop"
        fail_points.append((ratio, drop))
    msg = " ".join(f"{r:.2f}/{d * 100:.1f}pt" for r, d in fail_points)
    print(f"[criterion 8] PASS first decode-fail ratio/accuracy-drop per seed: {msg}")


def test_criterion_09_threshold_defense_restores_the_mask():
    sweep = (0.0, 0.001, 0.005, 0.02, 0.1, 0.3, 0.5, 0.7)
    for seed in range(5):
        p = digits_pipeline(seed)
        model = p["emb"]
        ctx = AttackContext(record=p["rec"], owner_text=OWNER_TEXT)
        t = min_surviving_magnitude(model)
        for rate in (0.01, 0.02, 0.05, 0.1):
            out = attack_addon(model, rate, 0.5 * t, seed=seed + 400, ctx=ctx, defend_t=t)
            assert out.defense["mask_restored"] is True
            assert out.defense["residual"] == 0
            assert out.defense["decode_ok"] is True
        # without the defense the harm is ordered: clean decode + untouched
        # region, then decode through correctable noise, then decode loss
        states = []
        for rate in sweep:
            out = attack_addon(model, rate, 0.05, seed=seed + 400, ctx=ctx)
            states.append(2 if out.decode_ok and out.match_ok else 1 if out.decode_ok else 0)
        assert states[0] == 2
        assert 1 in states and 0 in states
        assert all(a >= b for a, b in zip(states, states[1:]))
    print("[criterion 9] PASS defense restores masks bit-exactly at rates <=10%; "
          "undefended decay is ordered")


def test_criterion_10_trigger_set_remote_probe():
    for seed in range(5):
        p = digits_pipeline(seed)
        trig = make_trigger_set(seed + 300, 4, (64,), size=64)
        tr = retrain_ticket(p["emb"], p["data"], p["cfg"], trigger=trig)
        assert tr.trigger_acc >= 0.85
        cost = p["plain"].test_acc - tr.test_acc
        assert cost <= 0.01
        neg = trigger_accuracy(p["plain"].model, trig)
        assert neg <= 0.25 + 0.15, f"negative control too confident: {neg}"
        bb = verify_blackbox(model_predict_fn(tr.model), trig)
        assert bb["status"] == "pass"
        ft = attack_finetune(
            tr.model, make_dataset("digits", seed + 500), p["cfg"],
            ctx=AttackContext(record=p["rec"], owner_text=OWNER_TEXT),
        )
        for a, b in zip(ft.model.masks, tr.model.masks):
            assert a.bits == b.bits
        assert verify_whitebox(ft.model, OWNER_TEXT, record=p["rec"])["pass"] is True
    print("[criterion 10] PASS triggers >=85% at <=1pt cost; controls near chance; "
          "fine-tuning keeps masks and the decode")


def test_criterion_11_region_overwrite_costs_accuracy():
    drops = []
    for seed in range(5):
        p = digits_pipeline(seed)
        model = p["emb_tr"].model
        mags = np.concatenate(
            [np.abs(w)[m.to_array().astype(bool)] for w, m in zip(model.weights, model.masks)]
        )
        noise = 12.0 * float(np.quantile(mags, 0.75))
        new_sig = encode("pwn", "robust", 4)
        ctx = AttackContext(data=p["data"], record=p["rec"], owner_text=OWNER_TEXT)
        out = attack_fake3(model, new_sig, noise, seed=seed + 200, record=p["rec"], ctx=ctx)
        assert out.extra["new_sig_decodes"] is True
        drop = out.acc_before - out.acc_after
        assert drop > 0.10, f"seed {seed}: overwrite only cost {drop * 100:.1f}pt"
        drops.append(drop)
    msg = " ".join(f"{d * 100:.1f}" for d in drops)
    print(f"[criterion 11] PASS insider overwrite drops accuracy by {msg} pts per seed")


def test_criterion_12_any_run_replays_bit_exactly(tmp_path):
    def run(*argv):
        buf = io.StringIO()
        rc = dispatch(list(argv), buf)
        return rc, buf.getvalue()

    ticket = str(tmp_path / "ticket.lotb")
    rc, _ = run(
        "find-ticket", "--arch", "mlp:2-16-16-4", "--data", "rings:0", "--out", ticket,
        "--epochs", "6", "--milestones", "4,5", "--rewind-epoch", "1",
        "--ladder", "0.2", "--round-limits", "1", "--weight-decay", "0.0",
    )
    assert rc == 0
    sig = str(tmp_path / "sig.pbm")
    rc, _ = run("encode", "--text", OWNER_TEXT, "--out", sig)
    assert rc == 0
    for manifest in (ticket + ".run.json", sig + ".run.json"):
        rdir = tmp_path / (manifest.rsplit("/", 1)[-1] + ".replay")
        rc, out = run("replay", "--manifest-in", manifest, "--dir", str(rdir))
        doc = json.loads(out)
        assert rc == 0
        assert doc["reproduced"] is True
        assert doc["stdout_match"] is True
        assert doc["mismatches"] == []
    print("[criterion 12] PASS training and codec runs replay to identical digests")
