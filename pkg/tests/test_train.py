"""Masked SGD training behavior."""

import numpy as np
import pytest

from ticketlock import TrainConfig, init_model, make_dataset, make_trigger_set, parse_arch
from ticketlock.masks import LayerMask
from ticketlock.train import evaluate, train, trigger_accuracy

FAST = dict(epochs=4, milestones=(2,), batch_size=64, rewind_epoch=1)


def _masked_model(seed=0, density=0.5):
    m = init_model(parse_arch("mlp:2-16-16-4"), seed)
    rng = np.random.default_rng(seed)
    masks = [LayerMask.from_array(rng.random(w.shape) < density) for w in m.weights]
    return m.with_masks(masks, zero_pruned=True)


def test_pruned_positions_stay_zero():
    data = make_dataset("rings", 0)
    model = _masked_model()
    res = train(model, data, TrainConfig(seed=0, **FAST))
    for w, mk in zip(res.model.weights, res.model.masks):
        assert np.all(w[mk.to_array() == 0] == 0.0)
    for a, b in zip(res.model.masks, model.masks):
        assert a.bits == b.bits


def test_training_improves_over_init():
    data = make_dataset("rings", 0)
    model = _masked_model(density=0.9)
    before = evaluate(model, data)
    res = train(model, data, TrainConfig(seed=0, **FAST))
    assert res.test_acc > before + 0.2


def test_determinism():
    data = make_dataset("rings", 0)
    model = _masked_model()
    r1 = train(model, data, TrainConfig(seed=3, **FAST))
    r2 = train(model, data, TrainConfig(seed=3, **FAST))
    for a, b in zip(r1.model.weights, r2.model.weights):
        assert np.array_equal(a, b)
    assert r1.test_acc == r2.test_acc
    r3 = train(model, data, TrainConfig(seed=4, **FAST))
    assert any(
        not np.array_equal(a, b) for a, b in zip(r1.model.weights, r3.model.weights)
    )


def test_rewind_checkpoint_captured_mid_training():
    data = make_dataset("rings", 0)
    model = _masked_model()
    res = train(model, data, TrainConfig(seed=1, **FAST))
    init_w = model.weights
    final_w = res.model.weights
    differs_from_init = any(not np.array_equal(a, b) for a, b in zip(res.rewind_weights, init_w))
    differs_from_final = any(not np.array_equal(a, b) for a, b in zip(res.rewind_weights, final_w))
    assert differs_from_init and differs_from_final
    for rw, mk in zip(res.rewind_weights, model.masks):
        assert np.all(rw[mk.to_array() == 0] == 0.0)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=3, rewind_epoch=3)


def test_shape_mismatch_rejected():
    data = make_dataset("digits", 0)  # 64-dim inputs vs 2-dim model
    model = _masked_model()
    with pytest.raises(Exception):
        train(model, data, TrainConfig(seed=0, **FAST))


def test_trigger_training_memorizes():
    # memorization needs room: high-dimensional inputs, not the 2-d task
    data = make_dataset("digits", 0)
    m = init_model(parse_arch("mlp:64-32-4"), 0)
    rng = np.random.default_rng(0)
    masks = [LayerMask.from_array(rng.random(w.shape) < 0.9) for w in m.weights]
    model = m.with_masks(masks, zero_pruned=True)
    trig = make_trigger_set(5, 4, (64,), size=32)
    cfg = TrainConfig(seed=0, epochs=10, milestones=(6, 8), batch_size=64, rewind_epoch=1)
    plain = train(model, data, cfg)
    with_trig = train(model, data, cfg, trigger=trig)
    assert plain.trigger_acc is None
    assert with_trig.trigger_acc == trigger_accuracy(with_trig.model, trig)
    assert with_trig.trigger_acc > trigger_accuracy(plain.model, trig) + 0.3
    assert with_trig.test_acc > plain.test_acc - 0.05
