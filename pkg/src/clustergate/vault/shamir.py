"""Threshold secret sharing over GF(2^8), applied byte by byte.

Share ``x`` of a secret byte is ``f(x)`` for a random polynomial of degree
``threshold - 1`` whose constant term is the secret byte. Shares are encoded
as one byte of x-coordinate followed by the evaluations.
"""
from __future__ import annotations

import secrets
from typing import Sequence

# AES reduction polynomial x^8 + x^4 + x^3 + x + 1, generator 3
_EXP = [0] * 512
_LOG = [0] * 256
_v = 1
for _i in range(255):
    _EXP[_i] = _v
    _LOG[_v] = _i
    _v ^= (_v << 1) ^ (0x11B if _v & 0x80 else 0)
    _v &= 0xFF
for _i in range(255, 512):
    _EXP[_i] = _EXP[_i - 255]


def gf_mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return _EXP[_LOG[a] + _LOG[b]]


def gf_div(a: int, b: int) -> int:
    if b == 0:
        raise ZeroDivisionError("division by zero in GF(2^8)")
    if a == 0:
        return 0
    return _EXP[_LOG[a] + 255 - _LOG[b]]


def _eval(coeffs: Sequence[int], x: int) -> int:
    acc = 0
    for c in reversed(coeffs):
        acc = gf_mul(acc, x) ^ c
    return acc


def split(secret: bytes, shares: int, threshold: int) -> list[bytes]:
    if not 1 <= threshold <= shares <= 255:
        raise ValueError(f"need 1 <= threshold <= shares <= 255, got threshold={threshold}, shares={shares}")
    out = [bytearray([x]) for x in range(1, shares + 1)]
    for byte in secret:
        coeffs = [byte] + [secrets.randbelow(256) for _ in range(threshold - 1)]
        for share in out:
            share.append(_eval(coeffs, share[0]))
    return [bytes(s) for s in out]


def combine(shares: Sequence[bytes]) -> bytes:
    """Lagrange-interpolate every byte position at x = 0."""
    if not shares:
        raise ValueError("no shares given")
    xs = [s[0] for s in shares]
    if 0 in xs or len(set(xs)) != len(xs):
        raise ValueError("share x-coordinates must be distinct and non-zero")
    length = len(shares[0])
    if any(len(s) != length for s in shares):
        raise ValueError("shares have different lengths")
    weights = []
    for i, xi in enumerate(xs):
        w = 1
        for j, xj in enumerate(xs):
            if i != j:
                # basis polynomial at 0: prod xj / (xj - xi); subtraction is xor
                w = gf_mul(w, gf_div(xj, xj ^ xi))
        weights.append(w)
    secret = bytearray()
    for pos in range(1, length):
        acc = 0
        for w, s in zip(weights, shares):
            acc ^= gf_mul(w, s[pos])
        secret.append(acc)
    return bytes(secret)
