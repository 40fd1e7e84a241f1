"""Serialization of sparse model bundles (``.lotb`` files).

Layout (little-endian throughout; byte-exact description in FORMAT.md):

    magic   b"LOTB"
    u16     format version (currently 1)
    u32     manifest byte length
    bytes   manifest JSON (UTF-8, sorted keys)
    blobs   for each manifest blob entry, in order:
                u32 payload length | u32 CRC-32 of payload | payload

The manifest carries the architecture, a blob table (role, layer, dtype,
shape), and free-form metadata. Weight blobs are float32 row-major with
pruned positions stored as exact zeros; mask blobs are bit-packed.
round-trips are bit-identical.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .masks import LayerMask
from .model import Architecture, SparseModel

MAGIC = b"LOTB"
FORMAT_VERSION = 1


class BundleError(Exception):
    """Base class for bundle I/O failures."""

    code = "bundle_error"


class BundleHeaderError(BundleError):
    code = "corrupt_header"


class BundleTruncatedError(BundleError):
    code = "truncated_blob"


class BundleChecksumError(BundleError):
    code = "checksum_mismatch"


def _blob_entries(model: SparseModel) -> tuple[list[dict], list[bytes]]:
    entries, payloads = [], []

    def add(role: str, layer: int, payload: bytes, dtype: str, shape: tuple[int, ...]):
        entries.append({"role": role, "layer": layer, "dtype": dtype, "shape": list(shape)})
        payloads.append(payload)

    for i, (w, m, b) in enumerate(zip(model.weights, model.masks, model.biases)):
        wm = (w * m.to_array()).astype("<f4")  # pruned positions saved as exact zeros
        add("weight", i, wm.tobytes(), "f4", w.shape)
        add("mask", i, m.bits, "bits", m.shape)
        add("bias", i, b.astype("<f4").tobytes(), "f4", b.shape)
    if model.init_weights is not None:
        for i, iw in enumerate(model.init_weights):
            add("init_weight", i, iw.astype("<f4").tobytes(), "f4", iw.shape)
    if model.init_biases is not None:
        for i, ib in enumerate(model.init_biases):
            add("init_bias", i, ib.astype("<f4").tobytes(), "f4", ib.shape)
    return entries, payloads


def save_bundle(model: SparseModel, path: str | Path) -> None:
    entries, payloads = _blob_entries(model)
    manifest = {
        "format": f"lotb@{FORMAT_VERSION}",
        "arch": model.arch.to_dict(),
        "blobs": entries,
        "meta": model.meta,
    }
    mbytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(mbytes)))
        fh.write(mbytes)
        for payload in payloads:
            fh.write(struct.pack("<I", len(payload)))
            fh.write(struct.pack("<I", zlib.crc32(payload)))
            fh.write(payload)


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise BundleTruncatedError(f"unexpected end of file while reading {what}")
    return data


def load_bundle(path: str | Path) -> SparseModel:
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head != MAGIC:
            raise BundleHeaderError(f"corrupt header: bad magic {head!r}")
        raw_ver = fh.read(2)
        if len(raw_ver) != 2:
            raise BundleHeaderError("corrupt header: missing version")
        (version,) = struct.unpack("<H", raw_ver)
        if version != FORMAT_VERSION:
            raise BundleHeaderError(f"unsupported format version {version}")
        raw_len = fh.read(4)
        if len(raw_len) != 4:
            raise BundleHeaderError("corrupt header: missing manifest length")
        (mlen,) = struct.unpack("<I", raw_len)
        try:
            manifest = json.loads(_read_exact(fh, mlen, "manifest").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise BundleHeaderError(f"corrupt header: manifest not valid JSON ({exc})") from None

        blobs = []
        for entry in manifest["blobs"]:
            (blen,) = struct.unpack("<I", _read_exact(fh, 4, "blob length"))
            (crc,) = struct.unpack("<I", _read_exact(fh, 4, "blob checksum"))
            payload = _read_exact(fh, blen, f"blob {entry['role']}/{entry['layer']}")
            if zlib.crc32(payload) != crc:
                raise BundleChecksumError(
                    f"checksum mismatch on blob {entry['role']} layer {entry['layer']}"
                )
            blobs.append(payload)

    arch = Architecture.from_dict(manifest["arch"])
    n = len(arch.layers)
    weights: list = [None] * n
    masks: list = [None] * n
    biases: list = [None] * n
    init_w: list = [None] * n
    init_b: list = [None] * n
    for entry, payload in zip(manifest["blobs"], blobs):
        shape = tuple(entry["shape"])
        i = entry["layer"]
        if entry["role"] == "mask":
            value = LayerMask(shape=shape, bits=payload)
        else:
            value = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
        if entry["role"] == "weight":
            weights[i] = value
        elif entry["role"] == "mask":
            masks[i] = value
        elif entry["role"] == "bias":
            biases[i] = value
        elif entry["role"] == "init_weight":
            init_w[i] = value
        elif entry["role"] == "init_bias":
            init_b[i] = value
        else:
            raise BundleHeaderError(f"unknown blob role {entry['role']!r}")
    if any(v is None for v in weights + masks + biases):
        raise BundleHeaderError("manifest is missing weight/mask/bias blobs for some layer")
    return SparseModel(
        arch=arch,
        weights=tuple(weights),
        masks=tuple(masks),
        biases=tuple(biases),
        init_weights=tuple(init_w) if all(v is not None for v in init_w) else None,
        init_biases=tuple(init_b) if all(v is not None for v in init_b) else None,
        meta=manifest.get("meta", {}),
    )
