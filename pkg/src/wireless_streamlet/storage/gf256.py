"""GF(2^8) arithmetic with the 0x11D reduction polynomial, table driven."""

from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np

POLY = 0x11D


def _build_tables():
    exp = np.zeros(512, dtype=np.int32)
    log = np.zeros(256, dtype=np.int32)
    x = 1
    for i in range(255):
        exp[i] = x
        log[x] = i
        x <<= 1
        if x & 0x100:
            x ^= POLY
    exp[255:510] = exp[0:255]
    a = np.arange(256)
    mul = np.zeros((256, 256), dtype=np.uint8)
    la = log[a[1:]]
    mul[1:, 1:] = exp[(la[:, None] + la[None, :]) % 255]
    inv = np.zeros(256, dtype=np.uint8)
    inv[1:] = exp[(255 - log[1:]) % 255]
    return exp, log, mul, inv


EXP, LOG, MUL, INV = _build_tables()


def gf_add(a: int, b: int) -> int:
    return a ^ b


def gf_mul(a: int, b: int) -> int:
    return int(MUL[a, b])


def gf_inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("zero has no inverse in GF(256)")
    return int(INV[a])


def gf_div(a: int, b: int) -> int:
    return gf_mul(a, gf_inv(b))


def scale(row: np.ndarray, c: int) -> np.ndarray:
    """Multiply every byte of ``row`` by the field element ``c``."""
    return MUL[c][row]


def combine(coeffs: Sequence[int], rows: np.ndarray) -> np.ndarray:
    """sum_j coeffs[j] * rows[j] over GF(256); rows has shape (k, length)."""
    out = np.zeros(rows.shape[1], dtype=np.uint8)
    for c, row in zip(coeffs, rows):
        if c:
            out ^= MUL[c][row]
    return out


def solve(coeffs: np.ndarray, data: np.ndarray) -> Tuple[int, np.ndarray]:
    """Gauss-Jordan elimination of ``coeffs @ X = data``.

    ``coeffs`` is (r, k), ``data`` is (r, length). Returns (rank, X) where X
    is only meaningful when rank == k.
    """
    a = np.array(coeffs, dtype=np.uint8, copy=True)
    d = np.array(data, dtype=np.uint8, copy=True)
    r, k = a.shape
    rank = 0
    pivots: List[int] = []
    for col in range(k):
        pivot = None
        for row in range(rank, r):
            if a[row, col]:
                pivot = row
                break
        if pivot is None:
            continue
        if pivot != rank:
            a[[rank, pivot]] = a[[pivot, rank]]
            d[[rank, pivot]] = d[[pivot, rank]]
        iv = INV[a[rank, col]]
        a[rank] = MUL[iv][a[rank]]
        d[rank] = MUL[iv][d[rank]]
        for row in range(r):
            if row != rank and a[row, col]:
                c = a[row, col]
                a[row] ^= MUL[c][a[rank]]
                d[row] ^= MUL[c][d[rank]]
        pivots.append(col)
        rank += 1
        if rank == r:
            break
    if rank < k:
        return rank, d[:0]
    return rank, d[:k]


def matrix_rank(coeffs: np.ndarray) -> int:
    rank, _ = solve(coeffs, np.zeros((coeffs.shape[0], 1), dtype=np.uint8))
    return rank
