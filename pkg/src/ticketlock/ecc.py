"""Error-correction primitives for the signature codec.

Reed-Solomon over GF(2^m) with Berlekamp-Massey decoding, a rate-7/64
first-order Reed-Muller inner code decoded by maximum likelihood via a fast
Hadamard transform, and CRC-16/CCITT-FALSE for payload integrity. The inner
code's 7-bit symbols line up exactly with an outer Reed-Solomon code over
GF(128), so one garbled 64-bit chunk costs one outer symbol.
"""

from __future__ import annotations

import numpy as np


class ECCError(Exception):
    pass


class ECCDecodeError(ECCError):
    """Received word is beyond the code's correction capability."""


class GF:
    """GF(2^m) arithmetic via exp/log tables; poly includes the leading term."""

    def __init__(self, m: int, poly: int):
        self.m = m
        self.q = 1 << m
        self.poly = poly
        exp = [0] * (2 * self.q)
        log = [0] * self.q
        x = 1
        for i in range(self.q - 1):
            exp[i] = x
            log[x] = i
            x <<= 1
            if x & self.q:
                x ^= poly
        if x != 1 or len(set(exp[: self.q - 1])) != self.q - 1:
            raise ECCError(f"0x{poly:X} is not primitive over GF(2^{m})")
        for i in range(self.q - 1, 2 * self.q - 2):
            exp[i] = exp[i - (self.q - 1)]
        self.exp = exp
        self.log = log

    def mul(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        return self.exp[self.log[a] + self.log[b]]

    def inv(self, a: int) -> int:
        if a == 0:
            raise ZeroDivisionError("inverse of 0 in GF")
        return self.exp[self.q - 1 - self.log[a]]

    def div(self, a: int, b: int) -> int:
        return self.mul(a, self.inv(b))

    def pow_alpha(self, e: int) -> int:
        return self.exp[e % (self.q - 1)]


GF128 = GF(7, 0x89)
GF256 = GF(8, 0x11D)


def _poly_eval(gf: GF, poly_high_first: list[int], x: int) -> int:
    acc = 0
    for c in poly_high_first:
        acc = gf.mul(acc, x) ^ c
    return acc


def rs_generator(gf: GF, nsym: int) -> list[int]:
    """Monic generator with roots alpha^1..alpha^nsym, highest degree first."""
    g = [1]
    for i in range(1, nsym + 1):
        root = gf.exp[i]
        nxt = [0] * (len(g) + 1)
        for j, c in enumerate(g):
            nxt[j] ^= gf.mul(c, 1)
            nxt[j + 1] ^= gf.mul(c, root)
        g = nxt
    return g


def rs_encode(gf: GF, msg: list[int], nsym: int) -> list[int]:
    """Systematic codeword msg||parity of length len(msg)+nsym."""
    if len(msg) + nsym > gf.q - 1:
        raise ECCError(f"codeword length {len(msg) + nsym} exceeds GF limit {gf.q - 1}")
    g = rs_generator(gf, nsym)
    rem = [0] * nsym
    for m in msg:
        coef = m ^ rem[0]
        rem = rem[1:] + [0]
        if coef != 0:
            for j in range(nsym):
                rem[j] ^= gf.mul(g[j + 1], coef)
    return list(msg) + rem


def rs_decode(gf: GF, cw: list[int], nsym: int) -> tuple[list[int], int]:
    """Correct up to nsym//2 symbol errors; returns (message, errors fixed)."""
    n = len(cw)
    synd = [_poly_eval(gf, cw, gf.exp[i + 1]) for i in range(nsym)]
    if not any(synd):
        return list(cw[: n - nsym]), 0

    # Berlekamp-Massey, locator sigma lowest-degree-first
    sigma = [1]
    prev = [1]
    L = 0
    m_gap = 1
    b = 1
    for step in range(nsym):
        d = synd[step]
        for i in range(1, L + 1):
            if i < len(sigma):
                d ^= gf.mul(sigma[i], synd[step - i])
        if d == 0:
            m_gap += 1
            continue
        coef = gf.div(d, b)
        shifted = [0] * m_gap + prev
        adjusted = [0] * max(len(sigma), len(shifted))
        for i, c in enumerate(sigma):
            adjusted[i] ^= c
        for i, c in enumerate(shifted):
            adjusted[i] ^= gf.mul(coef, c)
        if 2 * L <= step:
            prev = sigma
            b = d
            L = step + 1 - L
            m_gap = 1
        else:
            m_gap += 1
        sigma = adjusted
    while len(sigma) > 1 and sigma[-1] == 0:
        sigma = sigma[:-1]
    n_err = len(sigma) - 1
    if n_err > nsym // 2 or L != n_err:
        raise ECCDecodeError("error locator degree exceeds correction capability")

    # Chien search over codeword locations p = n-1-i
    locations = []
    for p in range(n):
        x = gf.exp[(gf.q - 1 - p) % (gf.q - 1)]
        acc = 0
        for i, c in enumerate(sigma):
            acc ^= gf.mul(c, gf.pow_alpha(gf.log[x] * i)) if c else 0
        if acc == 0:
            locations.append(p)
    if len(locations) != n_err:
        raise ECCDecodeError("locator roots do not match its degree")

    # Forney, first consecutive root alpha^1
    s_poly = synd[:]  # lowest-first
    omega = [0] * nsym
    for i, si in enumerate(s_poly):
        for j, cj in enumerate(sigma):
            if i + j < nsym and si and cj:
                omega[i + j] ^= gf.mul(si, cj)
    deriv = [sigma[i] for i in range(1, len(sigma), 2)]  # odd terms, x^(i-1) packed even

    fixed = list(cw)
    for p in locations:
        x_inv = gf.exp[(gf.q - 1 - p) % (gf.q - 1)]
        om = 0
        for i, c in enumerate(omega):
            om ^= gf.mul(c, gf.pow_alpha(gf.log[x_inv] * i)) if c else 0
        dv = 0
        for i, c in enumerate(deriv):
            dv ^= gf.mul(c, gf.pow_alpha(gf.log[x_inv] * (2 * i))) if c else 0
        if dv == 0:
            raise ECCDecodeError("Forney derivative vanished")
        magnitude = gf.div(om, dv)
        fixed[n - 1 - p] ^= magnitude

    if any(_poly_eval(gf, fixed, gf.exp[i + 1]) for i in range(nsym)):
        raise ECCDecodeError("correction failed syndrome recheck")
    return fixed[: n - nsym], n_err


RM_BITS = 64


def rm64_encode(symbol: int) -> np.ndarray:
    """7-bit symbol -> 64-bit first-order Reed-Muller codeword ({0,1} array)."""
    if not 0 <= symbol < 128:
        raise ECCError("inner-code symbol must be 7 bits")
    a0 = (symbol >> 6) & 1
    m = symbol & 0x3F
    x = np.arange(RM_BITS, dtype=np.uint8)
    parity = np.bitwise_count(np.bitwise_and(x, np.uint8(m))) & 1
    return (parity ^ a0).astype(np.uint8)


def rm64_decode(bits: np.ndarray) -> tuple[int, int]:
    """ML decode of a 64-bit chunk; returns (symbol, bit errors corrected)."""
    bits = np.asarray(bits).reshape(RM_BITS)
    v = (1 - 2 * bits.astype(np.int64)).copy()
    k = 1
    while k < RM_BITS:
        v = v.reshape(-1, 2, k)
        top = v[:, 0, :] + v[:, 1, :]
        bot = v[:, 0, :] - v[:, 1, :]
        v = np.stack([top, bot], axis=1)
        k *= 2
    corr = v.reshape(RM_BITS)
    m_star = int(np.argmax(np.abs(corr)))
    best = int(corr[m_star])
    a0 = 0 if best > 0 else 1
    errors = (RM_BITS - abs(best)) // 2
    return (a0 << 6) | m_star, int(errors)


def crc16(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection."""
    crc = 0xFFFF
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            if crc & 0x8000:
                crc = ((crc << 1) ^ 0x1021) & 0xFFFF
            else:
                crc = (crc << 1) & 0xFFFF
    return crc
