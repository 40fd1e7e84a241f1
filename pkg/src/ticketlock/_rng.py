"""Named, reproducible random substreams.

Every stochastic component draws from its own substream so that, e.g.,
changing the trigger-set seed never perturbs training batch order. Substreams
are derived from (root seed, stream name) only.
"""

from __future__ import annotations

import hashlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Return a Generator keyed by (seed, name), independent across names."""
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    children = np.frombuffer(digest[:16], dtype=np.uint32)
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *children.tolist()]))
