"""Binary layer masks, sparsity metrics, and sub-mask relations.

A mask assigns 0 (pruned) or 1 (surviving) to every weight element of a
layer. Masks are stored bit-packed in row-major order and are immutable:
every operation returns a new value.

Sparsity here counts *surviving* weights: ``spar = nnz / total``. The
denominator is the total element count (each entry of ``mask + 1`` is 1 or
2, hence nonzero). Relative sparsity divides two such fractions with a small
epsilon guarding the empty-mask case.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

RSPAR_EPS = 1e-12


class MaskError(ValueError):
    """Raised for malformed masks or incompatible mask pairs."""


@dataclass(frozen=True)
class LayerMask:
    """Bit-packed {0,1} mask over one weight tensor.

    ``bits`` holds ``prod(shape)`` bits packed MSB-first in row-major order
    (``np.packbits`` convention); trailing pad bits of the final byte are
    zero.
    """

    shape: tuple[int, ...]
    bits: bytes

    def __post_init__(self):
        if any(d <= 0 for d in self.shape):
            raise MaskError(f"non-positive dimension in shape {self.shape}")
        expected = (self.size + 7) // 8
        if len(self.bits) != expected:
            raise MaskError(f"bit buffer holds {len(self.bits)} bytes, expected {expected}")
        # pad bits beyond size must be zero so equal masks have equal bytes
        tail = np.unpackbits(np.frombuffer(self.bits, dtype=np.uint8))[self.size :]
        if tail.any():
            raise MaskError("nonzero padding bits in packed mask")

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "LayerMask":
        a = np.asarray(arr)
        if not np.isin(a, (0, 1)).all():
            raise MaskError("mask entries must be 0 or 1")
        packed = np.packbits(a.astype(np.uint8).reshape(-1))
        return cls(shape=tuple(int(d) for d in a.shape), bits=packed.tobytes())

    @classmethod
    def ones(cls, shape: Sequence[int]) -> "LayerMask":
        return cls.from_array(np.ones(tuple(shape), dtype=np.uint8))

    @classmethod
    def zeros(cls, shape: Sequence[int]) -> "LayerMask":
        return cls.from_array(np.zeros(tuple(shape), dtype=np.uint8))

    def to_array(self) -> np.ndarray:
        flat = np.unpackbits(np.frombuffer(self.bits, dtype=np.uint8), count=self.size)
        return flat.reshape(self.shape)

    @property
    def nnz(self) -> int:
        return int(np.unpackbits(np.frombuffer(self.bits, dtype=np.uint8), count=self.size).sum())


@dataclass(frozen=True)
class SparsityStats:
    """Surviving-weight statistics for a set of masks."""

    spar: float
    nnz: int
    total: int
    per_layer: tuple[tuple[float, int, int], ...] = ()


def _as_mask_list(masks: Iterable[LayerMask]) -> list[LayerMask]:
    out = list(masks)
    if not out:
        raise MaskError("no layers")
    return out


def _check_congruent(m1: Sequence[LayerMask], m2: Sequence[LayerMask]) -> None:
    if len(m1) != len(m2):
        raise MaskError(f"layer count mismatch: {len(m1)} vs {len(m2)}")
    for i, (a, b) in enumerate(zip(m1, m2)):
        if a.shape != b.shape:
            raise MaskError(f"layer {i} shape mismatch: {a.shape} vs {b.shape}")


def spar(masks: Iterable[LayerMask]) -> SparsityStats:
    """Fraction of surviving weights over all layers."""
    layers = _as_mask_list(masks)
    per_layer = []
    nnz = total = 0
    for m in layers:
        n, t = m.nnz, m.size
        per_layer.append((n / t, n, t))
        nnz += n
        total += t
    return SparsityStats(spar=nnz / total, nnz=nnz, total=total, per_layer=tuple(per_layer))


def rspar(m1: Iterable[LayerMask], m2: Iterable[LayerMask]) -> float:
    """Relative sparsity spar(m1) / (spar(m2) + eps)."""
    a, b = _as_mask_list(m1), _as_mask_list(m2)
    _check_congruent(a, b)
    return spar(a).spar / (spar(b).spar + RSPAR_EPS)


def is_submask(m2: Iterable[LayerMask], m: Iterable[LayerMask]) -> bool:
    """True iff m2 survives only where m survives (m - m2 is non-negative)."""
    sub, sup = _as_mask_list(m2), _as_mask_list(m)
    _check_congruent(sub, sup)
    for a, b in zip(sub, sup):
        if np.any(a.to_array() > b.to_array()):
            return False
    return True


def masks_disjoint(m1: Sequence[LayerMask], m2: Sequence[LayerMask]) -> bool:
    _check_congruent(m1, m2)
    return not any((a.to_array() & b.to_array()).any() for a, b in zip(m1, m2))


def mask_or(m1: Sequence[LayerMask], m2: Sequence[LayerMask]) -> list[LayerMask]:
    _check_congruent(m1, m2)
    return [LayerMask.from_array(a.to_array() | b.to_array()) for a, b in zip(m1, m2)]
