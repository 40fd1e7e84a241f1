"""Signature barcode codec: strings to 2D {0,1} matrices and back.

Symbols follow the familiar matrix-barcode geometry (size 17+4v for version
v, finder/separator/timing/format/alignment/version-info function regions).
Function positions are structural: they are zeroed in the produced matrix
and excluded from the payload, which occupies the remaining positions in
row-major order. The geometry descriptor records everything needed to
decode, so decoding never guesses.

Two ECC profiles:

- "robust" (default): outer Reed-Solomon over GF(128) whose 7-bit symbols
  map 1:1 onto 64-bit inner Reed-Muller chunks, bit-interleaved across the
  payload area. Survives heavy uniform bit damage (each chunk is ML-decoded,
  so ~20% random flips cost almost no outer symbols).
- "qr": byte-wise Reed-Solomon over GF(256) at a fixed ~27% symbol-correction
  rate, the classic high-correction barcode construction. A 9-character
  string fits the 21x21 version-1 symbol as RS(26,12).

Frame layout in both profiles: [length:1 byte][utf-8 bytes][crc16 big-endian],
padded to the data capacity with alternating 0xEC/0x11.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ecc import (
    ECCDecodeError,
    GF128,
    GF256,
    RM_BITS,
    crc16,
    rm64_decode,
    rm64_encode,
    rs_decode,
    rs_encode,
)

PROFILES = ("robust", "qr")
MIN_VERSION = {"robust": 3, "qr": 1}
MAX_VERSION = 8
ALIGNMENT_CENTERS = {
    1: (),
    2: (6, 18),
    3: (6, 22),
    4: (6, 26),
    5: (6, 30),
    6: (6, 34),
    7: (6, 22, 38),
    8: (6, 24, 42),
}
PAD_BYTES = (0xEC, 0x11)


class CodecError(ValueError):
    pass


class CapacityError(CodecError):
    """String too long; carries the maximum length that would fit."""

    def __init__(self, msg: str, max_chars: int):
        super().__init__(msg)
        self.max_chars = max_chars


@dataclass(frozen=True)
class DecodeResult:
    ok: bool
    text: Optional[str] = None
    reason: Optional[str] = None
    symbol_errors: int = 0
    bit_errors: int = 0

    @property
    def confidence_key(self) -> tuple:
        """Sort key: fewer corrections = higher confidence."""
        return (self.symbol_errors, self.bit_errors)


def symbol_size(version: int) -> int:
    return 17 + 4 * version


def version_for_size(n: int) -> int:
    v, rem = divmod(n - 17, 4)
    if rem != 0 or not 1 <= v <= MAX_VERSION:
        raise CodecError(f"no supported symbol version has size {n}")
    return v


def function_region_mask(version: int) -> np.ndarray:
    """Boolean NxN map of structural (non-payload) positions."""
    n = symbol_size(version)
    f = np.zeros((n, n), dtype=bool)
    for r0, c0 in ((0, 0), (0, n - 7), (n - 7, 0)):
        f[r0 : r0 + 7, c0 : c0 + 7] = True
    # separators: one light module around each finder's inner edges
    f[7, 0:8] = True
    f[0:8, 7] = True
    f[7, n - 8 : n] = True
    f[0:8, n - 8] = True
    f[n - 8, 0:8] = True
    f[n - 8 : n, 7] = True
    # timing
    f[6, 8 : n - 8] = True
    f[8 : n - 8, 6] = True
    # format strips + fixed dark module
    f[8, 0:9] = True
    f[0:9, 8] = True
    f[8, n - 8 : n] = True
    f[n - 7 : n, 8] = True
    f[n - 8, 8] = True
    # alignment patterns
    centers = ALIGNMENT_CENTERS[version]
    for r in centers:
        for c in centers:
            if (r, c) in ((6, 6), (6, n - 7), (n - 7, 6)):
                continue
            f[r - 2 : r + 3, c - 2 : c + 3] = True
    # version info blocks
    if version >= 7:
        f[0:6, n - 11 : n - 8] = True
        f[n - 11 : n - 8, 0:6] = True
    return f


def canonical_patterns(version: int) -> np.ndarray:
    """NxN uint8 with the standard function patterns drawn (1 = dark)."""
    n = symbol_size(version)
    m = np.zeros((n, n), dtype=np.uint8)
    finder = np.zeros((7, 7), dtype=np.uint8)
    finder[0, :] = finder[6, :] = finder[:, 0] = finder[:, 6] = 1
    finder[2:5, 2:5] = 1
    for r0, c0 in ((0, 0), (0, n - 7), (n - 7, 0)):
        m[r0 : r0 + 7, c0 : c0 + 7] = finder
    for i in range(8, n - 8):
        m[6, i] = m[i, 6] = (i + 1) % 2
    m[n - 8, 8] = 1
    align = np.zeros((5, 5), dtype=np.uint8)
    align[0, :] = align[4, :] = align[:, 0] = align[:, 4] = 1
    align[2, 2] = 1
    centers = ALIGNMENT_CENTERS[version]
    for r in centers:
        for c in centers:
            if (r, c) in ((6, 6), (6, n - 7), (n - 7, 6)):
                continue
            m[r - 2 : r + 3, c - 2 : c + 3] = align
    return m


def payload_coords(version: int) -> np.ndarray:
    """(P, 2) row-major coordinates of payload positions."""
    f = function_region_mask(version)
    rows, cols = np.nonzero(~f)
    return np.stack([rows, cols], axis=1)


def _ecc_params(profile: str, version: int) -> dict:
    """Fixed code split per (profile, version); documented in FORMAT.md."""
    if profile not in PROFILES:
        raise CodecError(f"unknown profile {profile!r}; expected one of {PROFILES}")
    if not MIN_VERSION[profile] <= version <= MAX_VERSION:
        raise CodecError(
            f"profile {profile!r} supports versions "
            f"{MIN_VERSION[profile]}..{MAX_VERSION}, got {version}"
        )
    p_bits = len(payload_coords(version))
    if profile == "robust":
        n = p_bits // RM_BITS
        parity = max(2, math.ceil(0.25 * n))
        k = n - parity
        return {"n": n, "k": k, "parity": parity, "sym_bits": 7, "data_bits": 7 * k}
    n = p_bits // 8
    t = int(0.27 * n)
    parity = 2 * t
    k = n - parity
    return {"n": n, "k": k, "parity": parity, "sym_bits": 8, "data_bits": 8 * k}


def capacity_chars(profile: str, version: int) -> int:
    """Maximum UTF-8 byte length that fits (frame adds 3 bytes overhead)."""
    params = _ecc_params(profile, version)
    return max(0, params["data_bits"] // 8 - 3)


def make_geometry(profile: str, version: int) -> dict:
    params = _ecc_params(profile, version)
    return {
        "size": symbol_size(version),
        "version": version,
        "profile": profile,
        "ecc_level": "H-analog",
        "ecc": params,
        "payload_bits": int(len(payload_coords(version))),
    }


@dataclass(frozen=True)
class SignatureMatrix:
    """Payload-bearing {0,1} matrix with structural positions zeroed."""

    matrix: np.ndarray
    geometry: dict

    def __post_init__(self):
        n = self.geometry["size"]
        if self.matrix.shape != (n, n):
            raise CodecError(f"matrix shape {self.matrix.shape} != geometry size {n}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape  # type: ignore[return-value]

    def with_patterns(self) -> np.ndarray:
        """Matrix copy with canonical structural patterns reinserted."""
        version = self.geometry["version"]
        out = np.where(
            function_region_mask(version), canonical_patterns(version), self.matrix
        )
        return out.astype(np.uint8)

    def payload_bits(self) -> np.ndarray:
        coords = payload_coords(self.geometry["version"])
        return self.matrix[coords[:, 0], coords[:, 1]].astype(np.uint8)


def _frame(data: bytes, k_bytes_capacity: int) -> bytes:
    body = bytes([len(data)]) + data
    return body + crc16(body).to_bytes(2, "big")


def _pad_bits(bits: list[int], total: int) -> list[int]:
    pad_stream = []
    i = 0
    while len(bits) + len(pad_stream) < total:
        byte = PAD_BYTES[i % 2]
        pad_stream.extend((byte >> (7 - b)) & 1 for b in range(8))
        i += 1
    return bits + pad_stream[: total - len(bits)]


def _bytes_to_bits(data: bytes) -> list[int]:
    return [(byte >> (7 - b)) & 1 for byte in data for b in range(8)]


def _bits_to_int(bits) -> int:
    acc = 0
    for b in bits:
        acc = (acc << 1) | int(b)
    return acc


def encode(s: str, profile: str = "robust", version: Optional[int] = None) -> SignatureMatrix:
    """Deterministically encode a UTF-8 string into a SignatureMatrix."""
    data = s.encode("utf-8")
    if len(data) > 255:
        raise CapacityError("strings above 255 utf-8 bytes are unsupported", 255)
    if version is None:
        version = next(
            (
                v
                for v in range(MIN_VERSION[profile], MAX_VERSION + 1)
                if capacity_chars(profile, v) >= len(data)
            ),
            None,
        )
        if version is None:
            raise CapacityError(
                f"string needs {len(data)} bytes; largest symbol fits "
                f"{capacity_chars(profile, MAX_VERSION)}",
                capacity_chars(profile, MAX_VERSION),
            )
    cap = capacity_chars(profile, version)
    if len(data) > cap:
        raise CapacityError(
            f"string needs {len(data)} bytes; version {version} fits {cap}", cap
        )

    params = _ecc_params(profile, version)
    frame = _frame(data, cap)
    coords = payload_coords(version)
    p_bits = len(coords)
    bits = np.zeros(p_bits, dtype=np.uint8)

    if profile == "robust":
        msg_bits = _pad_bits(_bytes_to_bits(frame), 7 * params["k"])
        msg = [_bits_to_int(msg_bits[7 * i : 7 * i + 7]) for i in range(params["k"])]
        cw = rs_encode(GF128, msg, params["parity"])
        n = params["n"]
        for c, sym in enumerate(cw):
            chunk = rm64_encode(sym)
            bits[c + np.arange(RM_BITS) * n] = chunk
        tail = np.arange(n * RM_BITS, p_bits)
        bits[tail] = tail % 2
    else:
        msg = list(frame) + [PAD_BYTES[i % 2] for i in range(params["k"] - len(frame))]
        cw = rs_encode(GF256, msg, params["parity"])
        stream = _bytes_to_bits(bytes(cw))
        bits[: len(stream)] = stream
        tail = np.arange(len(stream), p_bits)
        bits[tail] = tail % 2

    n_sym = symbol_size(version)
    matrix = np.zeros((n_sym, n_sym), dtype=np.uint8)
    matrix[coords[:, 0], coords[:, 1]] = bits
    return SignatureMatrix(matrix=matrix, geometry=make_geometry(profile, version))


def _parse_frame(msg_bytes: bytes, capacity: int) -> DecodeResult:
    if not msg_bytes:
        return DecodeResult(ok=False, reason="empty frame")
    length = msg_bytes[0]
    if length > capacity or 3 + length > len(msg_bytes):
        return DecodeResult(ok=False, reason="length field out of range")
    body = msg_bytes[: 1 + length]
    stored = int.from_bytes(msg_bytes[1 + length : 3 + length], "big")
    if crc16(body) != stored:
        return DecodeResult(ok=False, reason="crc mismatch")
    try:
        text = body[1:].decode("utf-8")
    except UnicodeDecodeError:
        return DecodeResult(ok=False, reason="invalid utf-8")
    return DecodeResult(ok=True, text=text)


def decode(sig: SignatureMatrix) -> DecodeResult:
    """ECC-decode a (possibly damaged) SignatureMatrix back to its string."""
    geom = sig.geometry
    profile = geom["profile"]
    version = geom["version"]
    params = _ecc_params(profile, version)
    # structural patterns are reinserted first; payload reads ignore them
    full = sig.with_patterns()
    coords = payload_coords(version)
    bits = full[coords[:, 0], coords[:, 1]].astype(np.uint8)

    if profile == "robust":
        n = params["n"]
        syms = []
        bit_errs = 0
        for c in range(n):
            sym, e = rm64_decode(bits[c + np.arange(RM_BITS) * n])
            syms.append(sym)
            bit_errs += e
        try:
            msg, fixed = rs_decode(GF128, syms, params["parity"])
        except ECCDecodeError as exc:
            return DecodeResult(ok=False, reason=f"uncorrectable: {exc}", bit_errors=bit_errs)
        msg_bits = [b for sym in msg for b in ((sym >> (6 - i)) & 1 for i in range(7))]
        n_bytes = len(msg_bits) // 8
        msg_bytes = bytes(
            _bits_to_int(msg_bits[8 * i : 8 * i + 8]) for i in range(n_bytes)
        )
        result = _parse_frame(msg_bytes, capacity_chars(profile, version))
        return DecodeResult(
            ok=result.ok,
            text=result.text,
            reason=result.reason,
            symbol_errors=fixed,
            bit_errors=bit_errs,
        )

    n = params["n"]
    stream = bits[: 8 * n]
    cw = [int(_bits_to_int(stream[8 * i : 8 * i + 8])) for i in range(n)]
    try:
        msg, fixed = rs_decode(GF256, cw, params["parity"])
    except ECCDecodeError as exc:
        return DecodeResult(ok=False, reason=f"uncorrectable: {exc}")
    result = _parse_frame(bytes(msg), capacity_chars(profile, version))
    return DecodeResult(
        ok=result.ok, text=result.text, reason=result.reason, symbol_errors=fixed
    )


def damage(sig: SignatureMatrix, fraction: float, rng: np.random.Generator) -> SignatureMatrix:
    """Flip floor(fraction * payload size) payload bits, chosen uniformly."""
    if not 0.0 <= fraction <= 1.0:
        raise CodecError("damage fraction must lie in [0, 1]")
    coords = payload_coords(sig.geometry["version"])
    n_flip = int(fraction * len(coords))
    pick = rng.choice(len(coords), size=n_flip, replace=False)
    out = sig.matrix.copy()
    rr, cc = coords[pick, 0], coords[pick, 1]
    out[rr, cc] ^= 1
    return SignatureMatrix(matrix=out, geometry=dict(sig.geometry))


def export_pbm(sig: SignatureMatrix, path, with_patterns: bool = False) -> None:
    """Write the matrix as a plain PBM (P1) bitmap, 1 = dark."""
    grid = sig.with_patterns() if with_patterns else sig.matrix
    lines = ["P1", f"{grid.shape[1]} {grid.shape[0]}"]
    lines += [" ".join(str(int(v)) for v in row) for row in grid]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def import_pbm(path, profile: str = "robust") -> SignatureMatrix:
    """Read a P1 bitmap back into a SignatureMatrix (structural bits stripped)."""
    with open(path, "r", encoding="ascii") as fh:
        tokens: list[str] = []
        for line in fh:
            line = line.split("#", 1)[0]
            tokens.extend(line.split())
    if not tokens or tokens[0] != "P1":
        raise CodecError("not a plain PBM (P1) file")
    if len(tokens) < 3:
        raise CodecError("truncated PBM header")
    w, h = int(tokens[1]), int(tokens[2])
    values = tokens[3:]
    if len(values) != w * h:
        raise CodecError(f"PBM pixel count {len(values)} != {w}x{h}")
    grid = np.array([int(v) for v in values], dtype=np.uint8).reshape(h, w)
    if not np.isin(grid, (0, 1)).all():
        raise CodecError("PBM pixels must be 0 or 1")
    version = version_for_size(h)
    if w != h:
        raise CodecError("symbol must be square")
    stripped = np.where(function_region_mask(version), 0, grid).astype(np.uint8)
    return SignatureMatrix(matrix=stripped, geometry=make_geometry(profile, version))
