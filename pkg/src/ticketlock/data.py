"""Synthetic classification tasks and trigger sets.

Three deterministic generators stand in for image benchmarks at desk scale:

* ``rings``   concentric annuli in the plane, one band per class
* ``blobs``   Gaussian mixture with one cluster per class
* ``digits``  noisy 8x8 glyph grids (64 features, or 1x8x8 for conv nets)

A generator id plus a seed reproduces a dataset exactly. Trigger sets are
procedural patterns drawn far from any task manifold, with labels assigned
uniformly at random; they exist solely to fingerprint a trained model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import substream


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    gen_id: str
    seed: int
    n_classes: int
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray

    def __post_init__(self):
        for y in (self.y_train, self.y_test):
            if y.size and (y.min() < 0 or y.max() >= self.n_classes):
                raise DataError("labels out of range")

    @property
    def input_shape(self) -> tuple[int, ...]:
        return tuple(self.x_train.shape[1:])


@dataclass(frozen=True)
class TriggerSet:
    """Off-manifold probe images with arbitrary fixed labels."""

    seed: int
    n_classes: int
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise DataError("trigger labels out of range")


def _rings(rng, n, n_classes, noise):
    # class k lives in the annulus of radius ~ k+1
    y = rng.integers(0, n_classes, size=n)
    radius = (y + 1.0) + rng.normal(0.0, noise, size=n)
    theta = rng.uniform(0.0, 2 * np.pi, size=n)
    x = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
    return x.astype(np.float32), y.astype(np.int64)


def _blobs(rng, n, n_classes, dim, spread):
    centers = rng.normal(0.0, 3.0, size=(n_classes, dim))
    y = rng.integers(0, n_classes, size=n)
    x = centers[y] + rng.normal(0.0, spread, size=(n, dim))
    return x.astype(np.float32), y.astype(np.int64)


# 8x8 glyph templates, visually digit-like; noise jitters pixels per sample.
_GLYPHS = [
    "00111100|01000010|01000010|01000010|01000010|01000010|01000010|00111100",  # 0
    "00011000|00111000|00011000|00011000|00011000|00011000|00011000|01111110",  # 1
    "00111100|01000010|00000010|00000100|00011000|00100000|01000000|01111110",  # 2
    "00111100|01000010|00000010|00011100|00000010|00000010|01000010|00111100",  # 3
    "00000100|00001100|00010100|00100100|01000100|01111110|00000100|00000100",  # 4
    "01111110|01000000|01000000|01111100|00000010|00000010|01000010|00111100",  # 5
    "00111100|01000000|01000000|01111100|01000010|01000010|01000010|00111100",  # 6
    "01111110|00000010|00000100|00001000|00010000|00100000|00100000|00100000",  # 7
    "00111100|01000010|01000010|00111100|01000010|01000010|01000010|00111100",  # 8
    "00111100|01000010|01000010|00111110|00000010|00000010|00000010|00111100",  # 9
]


def _digits(rng, n, n_classes, flip_p, noise, flat):
    templates = np.array(
        [[[int(c) for c in row] for row in g.split("|")] for g in _GLYPHS[:n_classes]],
        dtype=np.float32,
    )
    y = rng.integers(0, n_classes, size=n)
    x = templates[y]
    flips = rng.random(x.shape) < flip_p
    x = np.abs(x - flips.astype(np.float32))
    x = x + rng.normal(0.0, noise, size=x.shape).astype(np.float32)
    x = x.reshape(n, 64) if flat else x.reshape(n, 1, 8, 8)
    return x.astype(np.float32), y.astype(np.int64)


def make_dataset(
    gen_id: str,
    seed: int,
    n_train: int = 2000,
    n_test: int = 1000,
    n_classes: int = 4,
    **kw,
) -> Dataset:
    """Build a dataset from its generator id; (gen_id, seed) fixes all values."""
    r_train = substream(seed, f"data:{gen_id}:train")
    r_test = substream(seed, f"data:{gen_id}:test")
    if gen_id == "rings":
        noise = kw.get("noise", 0.18)
        xtr, ytr = _rings(r_train, n_train, n_classes, noise)
        xte, yte = _rings(r_test, n_test, n_classes, noise)
    elif gen_id == "blobs":
        dim, spread = kw.get("dim", 8), kw.get("spread", 1.0)
        # centers must be shared across the split
        r_shared = substream(seed, f"data:{gen_id}:centers")
        centers = r_shared.normal(0.0, 3.0, size=(n_classes, dim))

        def draw(rng, n):
            y = rng.integers(0, n_classes, size=n)
            x = centers[y] + rng.normal(0.0, spread, size=(n, dim))
            return x.astype(np.float32), y.astype(np.int64)

        xtr, ytr = draw(r_train, n_train)
        xte, yte = draw(r_test, n_test)
    elif gen_id in ("digits", "digits2d"):
        flip_p = kw.get("flip_p", 0.15)
        noise = kw.get("noise", 0.30)
        flat = gen_id == "digits"
        xtr, ytr = _digits(r_train, n_train, n_classes, flip_p, noise, flat)
        xte, yte = _digits(r_test, n_test, n_classes, flip_p, noise, flat)
    else:
        raise DataError(f"unknown generator {gen_id!r}")
    return Dataset(
        gen_id=gen_id, seed=seed, n_classes=n_classes,
        x_train=xtr, y_train=ytr, x_test=xte, y_test=yte,
    )


def parse_data_spec(spec: str, **kw) -> Dataset:
    """Parse ``gen:seed`` strings, e.g. ``rings:7`` or ``digits:3``."""
    try:
        gen_id, seed_s = spec.split(":")
        return make_dataset(gen_id, int(seed_s), **kw)
    except DataError:
        raise
    except Exception:
        raise DataError(f"bad data spec {spec!r}, expected 'generator:seed'") from None


def make_trigger_set(
    seed: int,
    n_classes: int,
    input_shape: tuple[int, ...],
    size: int = 100,
) -> TriggerSet:
    """Procedural off-manifold patterns with uniformly random labels.

    Patterns mix stripes, checkerboards, and heavy-tailed noise at amplitudes
    outside the task generators' range, so a model never trained on them
    predicts near chance.
    """
    rng = substream(seed, "trigger")
    flat_dim = int(np.prod(input_shape))
    xs = np.zeros((size, flat_dim), dtype=np.float32)
    for i in range(size):
        kind = i % 3
        if kind == 0:  # stripes of random period and phase
            period = int(rng.integers(2, 6))
            phase = int(rng.integers(0, period))
            base = (((np.arange(flat_dim) + phase) // period) % 2) * 2.0 - 1.0
        elif kind == 1:  # checkerboard over a pseudo-grid
            side = max(2, int(np.sqrt(flat_dim)))
            ii, jj = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
            board = ((ii + jj + int(rng.integers(0, 2))) % 2) * 2.0 - 1.0
            base = np.resize(board.reshape(-1), flat_dim)
        else:  # heavy-tailed noise, clipped so no single pixel dominates
            base = np.clip(rng.standard_t(df=3, size=flat_dim), -3.0, 3.0)
        # per-sample sign flips keep every pattern unique; duplicated bases
        # with conflicting random labels would cap reachable accuracy
        flip = rng.random(flat_dim) < 0.25
        base = np.where(flip, -base, base)
        amp = rng.uniform(1.2, 2.0)
        xs[i] = (amp * base + rng.normal(0.0, 0.2, size=flat_dim)).astype(np.float32)
    ys = rng.integers(0, n_classes, size=size).astype(np.int64)
    return TriggerSet(seed=seed, n_classes=n_classes, x=xs.reshape(size, *input_shape), y=ys)
