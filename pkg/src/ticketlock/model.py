"""Sparse model bundles: architecture descriptors, weights, masks.

A SparseModel is the ``weights (*) masks`` pair every pipeline consumes: an
ordered list of layer descriptors, per-layer float32 weight tensors, the
shape-congruent masks, and (optionally) the rewind checkpoint the masks were
found against. Biases exist for trainability but never participate in masks.

Values are immutable; mutation-style operations return fresh models.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from ._rng import substream
from .masks import LayerMask, MaskError, SparsityStats, masks_disjoint, spar


class ModelError(ValueError):
    """Raised for architecture violations or incongruent model pairs."""


@dataclass(frozen=True)
class LayerSpec:
    """One weight layer: fully connected or 2D convolution.

    dense:  weight shape (fan_out, fan_in)
    conv:   weight shape (fan_out, fan_in, kh, kw), stride 1, 'same' padding

    Conv stacks end with global average pooling before the first dense layer,
    so fan_in of a dense layer following convs equals the last channel count.
    """

    kind: str  # "dense" | "conv"
    fan_in: int
    fan_out: int
    kernel: tuple[int, int] = ()

    def __post_init__(self):
        if self.kind not in ("dense", "conv"):
            raise ModelError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv" and len(self.kernel) != 2:
            raise ModelError("conv layer needs a (kh, kw) kernel")
        if self.kind == "dense" and self.kernel:
            raise ModelError("dense layer takes no kernel")
        if self.fan_in <= 0 or self.fan_out <= 0:
            raise ModelError("fan_in/fan_out must be positive")

    @property
    def weight_shape(self) -> tuple[int, ...]:
        if self.kind == "dense":
            return (self.fan_out, self.fan_in)
        return (self.fan_out, self.fan_in, *self.kernel)


@dataclass(frozen=True)
class Architecture:
    """Ordered layer specs plus the input layout they expect.

    input_shape is (features,) for dense-first nets or (channels, h, w) for
    conv-first nets. Hidden activations are ReLU; the final layer is linear
    (softmax applied by the loss).
    """

    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, ...]

    def __post_init__(self):
        if not self.layers:
            raise ModelError("architecture needs at least one layer")
        seen_dense = False
        prev_out = self.input_shape[0]
        for spec in self.layers:
            if spec.kind == "dense":
                seen_dense = True
            elif seen_dense:
                raise ModelError("conv layer after dense layer is unsupported")
            if spec.fan_in != prev_out:
                raise ModelError(
                    f"fan_in {spec.fan_in} does not chain from previous fan_out {prev_out}"
                )
            prev_out = spec.fan_out

    @property
    def n_classes(self) -> int:
        return self.layers[-1].fan_out

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "layers": [
                {"kind": s.kind, "fan_in": s.fan_in, "fan_out": s.fan_out, "kernel": list(s.kernel)}
                for s in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        layers = tuple(
            LayerSpec(kind=l["kind"], fan_in=l["fan_in"], fan_out=l["fan_out"], kernel=tuple(l["kernel"]))
            for l in d["layers"]
        )
        return cls(layers=layers, input_shape=tuple(d["input_shape"]))


def parse_arch(text: str) -> Architecture:
    """Parse compact architecture strings.

    ``mlp:2-16-16-4``           dense net, 2 inputs, two hidden layers, 4 classes
    ``conv:1x8x8-8c3-12c3-4``   1x8x8 input, two 3x3 conv layers, dense head
    """
    try:
        family, body = text.split(":", 1)
        parts = body.split("-")
        if family == "mlp":
            dims = [int(p) for p in parts]
            layers = tuple(LayerSpec("dense", a, b) for a, b in zip(dims, dims[1:]))
            return Architecture(layers=layers, input_shape=(dims[0],))
        if family == "conv":
            c, h, w = (int(x) for x in parts[0].split("x"))
            prev = c
            layers = []
            for p in parts[1:]:
                if "c" in p:
                    ch, k = p.split("c")
                    layers.append(LayerSpec("conv", prev, int(ch), (int(k), int(k))))
                    prev = int(ch)
                else:
                    layers.append(LayerSpec("dense", prev, int(p)))
                    prev = int(p)
            return Architecture(layers=tuple(layers), input_shape=(c, h, w))
    except ModelError:
        raise
    except Exception as exc:
        raise ModelError(f"cannot parse architecture {text!r}: {exc}") from None
    raise ModelError(f"unknown architecture family in {text!r}")


def arch_to_string(arch: Architecture) -> str:
    if all(s.kind == "dense" for s in arch.layers):
        dims = [arch.input_shape[0]] + [s.fan_out for s in arch.layers]
        return "mlp:" + "-".join(str(d) for d in dims)
    head = "x".join(str(d) for d in arch.input_shape)
    parts = [head]
    for s in arch.layers:
        parts.append(f"{s.fan_out}c{s.kernel[0]}" if s.kind == "conv" else str(s.fan_out))
    return "conv:" + "-".join(parts)


@dataclass(frozen=True)
class SparseModel:
    """Architecture + dense weights + masks (+ optional rewind checkpoint).

    The effective parameters are always ``weights * masks``; weight values at
    pruned positions are kept at exactly zero.
    """

    arch: Architecture
    weights: tuple[np.ndarray, ...]
    masks: tuple[LayerMask, ...]
    biases: tuple[np.ndarray, ...]
    init_weights: Optional[tuple[np.ndarray, ...]] = None
    init_biases: Optional[tuple[np.ndarray, ...]] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (len(self.weights) == len(self.masks) == len(self.biases) == len(self.arch.layers)):
            raise ModelError("weights/masks/biases must have one entry per layer")
        for i, (spec, w, m, b) in enumerate(zip(self.arch.layers, self.weights, self.masks, self.biases)):
            if w.shape != spec.weight_shape:
                raise ModelError(f"layer {i} weight shape {w.shape} != {spec.weight_shape}")
            if m.shape != spec.weight_shape:
                raise ModelError(f"layer {i} mask shape {m.shape} != {spec.weight_shape}")
            if b.shape != (spec.fan_out,):
                raise ModelError(f"layer {i} bias shape {b.shape} != ({spec.fan_out},)")
        if self.init_weights is not None:
            for i, (w, iw) in enumerate(zip(self.weights, self.init_weights)):
                if w.shape != iw.shape:
                    raise ModelError(f"layer {i} init weight shape mismatch")

    @property
    def n_layers(self) -> int:
        return len(self.arch.layers)

    def masked_weights(self) -> list[np.ndarray]:
        return [w * m.to_array() for w, m in zip(self.weights, self.masks)]

    def sparsity(self) -> SparsityStats:
        return spar(self.masks)

    def with_masks(self, masks: Sequence[LayerMask], zero_pruned: bool = True) -> "SparseModel":
        masks = tuple(masks)
        weights = self.weights
        if zero_pruned:
            weights = tuple(
                (w * m.to_array()).astype(np.float32) for w, m in zip(self.weights, masks)
            )
        return replace(self, weights=weights, masks=masks)

    def with_weights(
        self,
        weights: Sequence[np.ndarray],
        biases: Optional[Sequence[np.ndarray]] = None,
    ) -> "SparseModel":
        new = replace(self, weights=tuple(np.asarray(w, dtype=np.float32) for w in weights))
        if biases is not None:
            new = replace(new, biases=tuple(np.asarray(b, dtype=np.float32) for b in biases))
        return new


def init_model(arch: Architecture, seed: int) -> SparseModel:
    """He-initialized dense model with all-ones masks, reproducible by seed."""
    rng = substream(seed, "init")
    weights, biases, masks = [], [], []
    for spec in arch.layers:
        fan_in = spec.fan_in if spec.kind == "dense" else spec.fan_in * spec.kernel[0] * spec.kernel[1]
        std = np.sqrt(2.0 / fan_in)
        weights.append(rng.normal(0.0, std, size=spec.weight_shape).astype(np.float32))
        biases.append(np.zeros(spec.fan_out, dtype=np.float32))
        masks.append(LayerMask.ones(spec.weight_shape))
    model = SparseModel(
        arch=arch,
        weights=tuple(weights),
        masks=tuple(masks),
        biases=tuple(biases),
        meta={"seed": seed},
    )
    return replace(model, init_weights=model.weights, init_biases=model.biases)


def merge(a: SparseModel, b: SparseModel) -> SparseModel:
    """Recombine two disjoint halves by adding weights and OR-ing masks.

    Inverse of a key/locked split: the merged bundle is bit-identical to the
    pre-split original.
    """
    if a.arch != b.arch:
        raise ModelError("cannot merge models with different architectures")
    if not masks_disjoint(a.masks, b.masks):
        raise MaskError("masks not disjoint")
    weights = tuple(
        (wa * ma.to_array() + wb * mb.to_array()).astype(np.float32)
        for wa, ma, wb, mb in zip(a.weights, a.masks, b.weights, b.masks)
    )
    masks = tuple(
        LayerMask.from_array(ma.to_array() | mb.to_array()) for ma, mb in zip(a.masks, b.masks)
    )
    biases = tuple((ba + bb).astype(np.float32) for ba, bb in zip(a.biases, b.biases))
    init_w = a.init_weights if a.init_weights is not None else b.init_weights
    init_b = a.init_biases if a.init_biases is not None else b.init_biases
    meta = dict(b.meta)
    meta.update(a.meta)
    return SparseModel(
        arch=a.arch,
        weights=weights,
        masks=masks,
        biases=biases,
        init_weights=init_w,
        init_biases=init_b,
        meta=meta,
    )
