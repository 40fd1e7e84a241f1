"""Shared fixtures: small seeded models and the cached toy pipelines.

The end-to-end pipelines (ticket search, embedding, retraining) are cached
per seed at session scope because several acceptance checks walk the same
artifacts from different angles.
"""

import numpy as np
import pytest

from ticketlock import (
    PruneSchedule,
    TrainConfig,
    embed,
    encode,
    imp_find_extreme_ticket,
    init_model,
    make_dataset,
    parse_arch,
    retrain_ticket,
)
from ticketlock._rng import substream
from ticketlock.masks import LayerMask

DIGITS_ARCH = "mlp:64-64-40-4"
DIGITS_CFG = dict(epochs=12, milestones=(7, 10), weight_decay=0.0)
DIGITS_SCHED = PruneSchedule(ladder=(0.2, 0.1), round_limits=(4, 2))
RINGS_ARCH = "mlp:2-32-32-4"
RINGS_CFG = dict(epochs=15, milestones=(9, 12))
OWNER_TEXT = "tk01"

_pipeline_cache: dict = {}


def random_masks(shapes, density, seed):
    rng = substream(seed, "test:masks")
    return [LayerMask.from_array(rng.random(s) < density) for s in shapes]


def tiny_model(arch_spec="mlp:6-5-4-3", seed=0):
    return init_model(parse_arch(arch_spec), seed)


def digits_pipeline(seed):
    """Ticket -> signature embed -> retrain, cached per seed."""
    key = ("digits", seed)
    if key in _pipeline_cache:
        return _pipeline_cache[key]
    data = make_dataset("digits", 0)
    cfg = TrainConfig(seed=seed, **DIGITS_CFG)
    res = imp_find_extreme_ticket(parse_arch(DIGITS_ARCH), data, cfg, DIGITS_SCHED)
    sig = encode(OWNER_TEXT, "robust")
    emb, rec = embed(res.model, sig, seed=seed + 100)
    plain = retrain_ticket(res.model, data, cfg)
    emb_tr = retrain_ticket(emb, data, cfg)
    out = dict(
        data=data, cfg=cfg, res=res, sig=sig, emb=emb, rec=rec,
        plain=plain, emb_tr=emb_tr,
    )
    _pipeline_cache[key] = out
    return out


def rings_ticket(seed):
    key = ("rings", seed)
    if key in _pipeline_cache:
        return _pipeline_cache[key]
    data = make_dataset("rings", 0)
    cfg = TrainConfig(seed=seed, **RINGS_CFG)
    res = imp_find_extreme_ticket(parse_arch(RINGS_ARCH), data, cfg)
    out = dict(data=data, cfg=cfg, res=res)
    _pipeline_cache[key] = out
    return out


@pytest.fixture(scope="session")
def digits_data():
    return make_dataset("digits", 0)


@pytest.fixture(scope="session")
def rings_data():
    return make_dataset("rings", 0)
