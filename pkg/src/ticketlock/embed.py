"""Embed signature matrices into sparse masks and recover them.

The embedder squeezes each candidate layer's mask to a 2D fiber indicator,
slides the signature over the first few low-level layers to find the most
similar region, and rewrites that region so its indicator equals the
signature bit-exactly. Fibers switched on receive a few randomly placed
kernel connections with rewind-init weights; global sparsity is restored
exactly by pruning the smallest surviving weights (or reactivating pruned
positions) outside the region.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ._rng import substream
from .codec import DecodeResult, SignatureMatrix, decode, make_geometry
from .masks import LayerMask
from .model import SparseModel

DEFAULT_SCAN_LAYERS = 3
ACTIVATION_QUANTILE = 0.95


class EmbedError(ValueError):
    pass


@dataclass(frozen=True)
class EmbedRecord:
    layer: int
    offset: tuple[int, int]
    geometry: dict
    similarity: float
    bits_changed: int

    def to_dict(self) -> dict:
        return {
            "layer": self.layer,
            "offset": list(self.offset),
            "geometry": self.geometry,
            "similarity": self.similarity,
            "bits_changed": self.bits_changed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EmbedRecord":
        return cls(
            layer=int(d["layer"]),
            offset=(int(d["offset"][0]), int(d["offset"][1])),
            geometry=dict(d["geometry"]),
            similarity=float(d["similarity"]),
            bits_changed=int(d["bits_changed"]),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "EmbedRecord":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class ScanHit:
    layer: int
    offset: tuple[int, int]
    result: DecodeResult


def squeeze(mask: LayerMask) -> np.ndarray:
    """2D fiber indicator: 1 iff the channel-pair fiber has a surviving weight."""
    arr = mask.to_array()
    if arr.ndim < 2:
        raise EmbedError("cannot squeeze a rank-1 mask")
    if arr.ndim == 2:
        return arr.astype(np.uint8)
    return arr.any(axis=tuple(range(2, arr.ndim))).astype(np.uint8)


def _candidate_layers(model: SparseModel, dims: tuple[int, int], k_layers: int) -> list[int]:
    found = []
    for i, m in enumerate(model.masks):
        sq = squeeze(m)
        if sq.shape[0] >= dims[0] and sq.shape[1] >= dims[1]:
            found.append(i)
        if len(found) == k_layers:
            break
    return found


def similarity_scan(
    model: SparseModel, sig: SignatureMatrix, k_layers: int = DEFAULT_SCAN_LAYERS
) -> tuple[int, tuple[int, int], float]:
    """Best (layer, offset, similarity) over the first fitting layers."""
    d1, d2 = sig.shape
    layers = _candidate_layers(model, (d1, d2), k_layers)
    if not layers:
        raise EmbedError("signature does not fit any layer")
    best = None
    for li in layers:
        sq = squeeze(model.masks[li])
        windows = np.lib.stride_tricks.sliding_window_view(sq, (d1, d2))
        match = (windows == sig.matrix).mean(axis=(2, 3))
        r, c = np.unravel_index(int(np.argmax(match)), match.shape)
        score = float(match[r, c])
        if best is None or score > best[2]:
            best = (li, (int(r), int(c)), score)
    return best


def _fiber_lift_count(mask_arr: np.ndarray) -> int:
    """ceil(median surviving elements per alive fiber) for dimension lifting."""
    if mask_arr.ndim == 2:
        return 1
    per_fiber = mask_arr.sum(axis=tuple(range(2, mask_arr.ndim)))
    alive = per_fiber[per_fiber > 0]
    if alive.size == 0:
        return 1
    return int(np.ceil(np.median(alive)))


def _default_sampler(weights: np.ndarray, mask: np.ndarray):
    """Activation values: surviving-magnitude upper quantile, random sign.

    Mid-rank magnitudes keep freshly activated connections away from the
    bottom of the global pruning order, so moderate magnitude pruning does
    not erase the embedded region first. Values are plain floats and train
    normally after rewinding.
    """
    surv = np.abs(weights[mask])
    scale = float(np.quantile(surv, ACTIVATION_QUANTILE)) if surv.size else 1.0

    def sample(rng, count):
        return rng.choice((-1.0, 1.0), size=count) * scale

    return sample


def rewrite_region(
    model: SparseModel,
    layer: int,
    offset: tuple[int, int],
    target: np.ndarray,
    seed: int,
    weight_sampler=None,
) -> tuple[SparseModel, int]:
    """Force the squeezed region to equal target; returns (model, bits changed).

    weight_sampler(rng, count) supplies values for newly activated positions;
    the default draws upper-quantile magnitudes with random signs. Activation
    values are written into the rewind checkpoint as well, so retraining the
    embedded model starts new connections from those values. Fibers that are
    already dark get their strongest element lifted to the same magnitude
    (sign preserved), so every dark bit of the region sits high in the global
    pruning order rather than only the freshly activated ones.
    """
    d1, d2 = target.shape
    r0, c0 = offset
    mask_arr = model.masks[layer].to_array().astype(bool)
    sq = squeeze(model.masks[layer]).astype(bool)
    if r0 < 0 or c0 < 0 or r0 + d1 > sq.shape[0] or c0 + d2 > sq.shape[1]:
        raise EmbedError(
            f"region {d1}x{d2}@{offset} exceeds layer {layer} extent {sq.shape}"
        )
    if model.init_weights is None:
        raise EmbedError("model carries no rewind checkpoint for new connections")

    rng = substream(seed, f"embed:lift:{layer}")
    lift = _fiber_lift_count(mask_arr)
    if weight_sampler is None:
        weight_sampler = _default_sampler(model.weights[layer], mask_arr)
    new_mask = mask_arr.copy()
    new_w = model.weights[layer].copy()
    new_init = model.init_weights[layer].copy()
    changed = 0
    tgt = target.astype(bool)
    region_sq = sq[r0 : r0 + d1, c0 : c0 + d2]
    kill = np.argwhere(region_sq & ~tgt)
    raise_ = np.argwhere(~region_sq & tgt)
    for i, j in kill:
        fi, fj = r0 + i, c0 + j
        changed += int(new_mask[fi, fj].sum())
        new_mask[fi, fj] = False
        new_w[fi, fj] = 0.0
    for i, j in raise_:
        fi, fj = r0 + i, c0 + j
        if mask_arr.ndim == 2:
            new_mask[fi, fj] = True
            v = weight_sampler(rng, 1)[0]
            new_w[fi, fj] = v
            new_init[fi, fj] = v
            changed += 1
        else:
            kshape = mask_arr.shape[2:]
            ksize = int(np.prod(kshape))
            count = min(lift, ksize)
            flat_pick = rng.choice(ksize, size=count, replace=False)
            values = weight_sampler(rng, count)
            for fp, v in zip(flat_pick, values):
                kidx = np.unravel_index(int(fp), kshape)
                new_mask[(fi, fj) + kidx] = True
                new_w[(fi, fj) + kidx] = v
                new_init[(fi, fj) + kidx] = v
            changed += count
    for i, j in np.argwhere(region_sq & tgt):
        fi, fj = r0 + i, c0 + j
        mag = abs(float(weight_sampler(rng, 1)[0]))
        if mask_arr.ndim == 2:
            picks = [(fi, fj)]
        else:
            fiber = np.abs(new_w[fi, fj]) * new_mask[fi, fj]
            kidx = np.unravel_index(int(np.argmax(fiber)), fiber.shape)
            picks = [(fi, fj) + kidx]
        for pos in picks:
            if abs(float(new_w[pos])) < mag:
                v = float(np.copysign(mag, new_w[pos] if new_w[pos] != 0 else 1.0))
                new_w[pos] = v
                new_init[pos] = v
    masks = list(model.masks)
    weights = list(model.weights)
    init_weights = list(model.init_weights)
    masks[layer] = LayerMask.from_array(new_mask)
    weights[layer] = new_w.astype(np.float32)
    init_weights[layer] = new_init.astype(np.float32)
    out = SparseModel(
        arch=model.arch,
        weights=tuple(weights),
        masks=model.masks,
        biases=model.biases,
        init_weights=tuple(init_weights),
        init_biases=model.init_biases,
        meta=model.meta,
    ).with_masks(masks, zero_pruned=True)
    return out, changed


def _region_element_selector(model: SparseModel, layer: int, offset: tuple[int, int], dims):
    """Boolean arrays flagging elements whose fiber lies inside the region."""
    flags = []
    for i, m in enumerate(model.masks):
        arr = np.zeros(m.shape, dtype=bool)
        if i == layer:
            r0, c0 = offset
            arr[r0 : r0 + dims[0], c0 : c0 + dims[1]] = True
        flags.append(arr)
    return flags


def _compensate_sparsity(
    model: SparseModel,
    delta: int,
    exclude: list[np.ndarray],
    seed: int,
) -> tuple[SparseModel, int]:
    """Prune (delta>0) or reactivate (delta<0) |delta| elements outside exclude."""
    if delta == 0:
        return model, 0
    masks = [m.to_array().astype(bool) for m in model.masks]
    weights = [w.copy() for w in model.weights]
    if delta > 0:
        mags, coords = [], []
        for li, (m, w, ex) in enumerate(zip(masks, weights, exclude)):
            sel = m & ~ex
            idx = np.argwhere(sel)
            if len(idx):
                mags.append(np.abs(w[sel]).astype(np.float64))
                coords.extend((li, tuple(ix)) for ix in idx)
        if not coords:
            raise EmbedError("no surviving weights left for sparsity compensation")
        mags = np.concatenate(mags)
        if delta > len(coords):
            raise EmbedError("embedding cannot preserve sparsity: region too dense")
        order = np.argsort(mags, kind="stable")[:delta]
        for oi in order:
            li, ix = coords[int(oi)]
            masks[li][ix] = False
            weights[li][ix] = 0.0
        n_changed = int(delta)
    else:
        rng = substream(seed, "embed:compensate")
        pool = []
        for li, (m, ex) in enumerate(zip(masks, exclude)):
            sel = ~m & ~ex
            pool.extend((li, tuple(ix)) for ix in np.argwhere(sel))
        need = -delta
        if need > len(pool):
            raise EmbedError("embedding cannot preserve sparsity: no pruned positions left")
        pick = rng.choice(len(pool), size=need, replace=False)
        if model.init_weights is None:
            raise EmbedError("model carries no rewind checkpoint for reactivation")
        for pi in pick:
            li, ix = pool[int(pi)]
            masks[li][ix] = True
            weights[li][ix] = model.init_weights[li][ix]
        n_changed = int(need)
    out = model.with_weights(weights).with_masks(
        [LayerMask.from_array(m) for m in masks], zero_pruned=True
    )
    return out, n_changed


def embed(
    model: SparseModel,
    sig: SignatureMatrix,
    seed: int = 0,
    k_layers: int = DEFAULT_SCAN_LAYERS,
) -> tuple[SparseModel, EmbedRecord]:
    """Write sig into the most similar region; global sparsity is unchanged."""
    layer, offset, similarity = similarity_scan(model, sig, k_layers)
    nnz_before = sum(int(m.nnz) for m in model.masks)
    out, changed = rewrite_region(model, layer, offset, sig.matrix, seed)
    delta = sum(int(m.nnz) for m in out.masks) - nnz_before
    exclude = _region_element_selector(out, layer, offset, sig.shape)
    out, comp_changed = _compensate_sparsity(out, delta, exclude, seed)
    record = EmbedRecord(
        layer=layer,
        offset=offset,
        geometry=dict(sig.geometry),
        similarity=similarity,
        bits_changed=changed + comp_changed,
    )
    out = SparseModel(
        arch=out.arch,
        weights=out.weights,
        masks=out.masks,
        biases=out.biases,
        init_weights=out.init_weights,
        init_biases=out.init_biases,
        meta={**out.meta, "embed_record": record.to_dict()},
    )
    return out, record


def extract(model: SparseModel, record: EmbedRecord) -> SignatureMatrix:
    """Read the squeezed region named by the record, ready for decoding."""
    if not 0 <= record.layer < model.n_layers:
        raise EmbedError(f"record names layer {record.layer}; model has {model.n_layers}")
    sq = squeeze(model.masks[record.layer])
    n = record.geometry["size"]
    r0, c0 = record.offset
    if r0 + n > sq.shape[0] or c0 + n > sq.shape[1]:
        raise EmbedError("record region exceeds layer extent")
    region = sq[r0 : r0 + n, c0 : c0 + n].astype(np.uint8)
    return SignatureMatrix(matrix=region, geometry=dict(record.geometry))


def blind_scan(
    model: SparseModel,
    geometry: dict,
    expected: str | None = None,
) -> list[ScanHit]:
    """Try decoding every admissible region; hits ranked by ECC confidence."""
    n = geometry["size"]
    hits: list[ScanHit] = []
    for li, m in enumerate(model.masks):
        sq = squeeze(m)
        if sq.shape[0] < n or sq.shape[1] < n:
            continue
        for r0 in range(sq.shape[0] - n + 1):
            for c0 in range(sq.shape[1] - n + 1):
                region = sq[r0 : r0 + n, c0 : c0 + n].astype(np.uint8)
                result = decode(SignatureMatrix(matrix=region, geometry=dict(geometry)))
                if result.ok and (expected is None or result.text == expected):
                    hits.append(ScanHit(layer=li, offset=(r0, c0), result=result))
    hits.sort(key=lambda h: h.result.confidence_key)
    return hits


def geometry_from_spec(spec: str, profile: str = "robust") -> dict:
    """Parse \"29x29\" style dimensions into a geometry descriptor."""
    parts = spec.lower().split("x")
    if len(parts) != 2 or parts[0] != parts[1]:
        raise EmbedError("geometry must be square, e.g. 29x29")
    size = int(parts[0])
    version = (size - 17) // 4
    if 17 + 4 * version != size:
        raise EmbedError(f"no symbol version has size {size}")
    return make_geometry(profile, version)
