"""Systematic rateless erasure code over GF(256).

Symbols ``0..k-1`` are the source symbols. Repair symbol ``i >= k`` is a
linear combination of the sources whose coefficient row is a Cauchy row
``1 / (x_i + y_j)`` (x_i = i, y_j = j) scaled by a nonzero factor taken from
``hash(payload_id || i)``. For indices below 256 this makes the code MDS: any
k distinct symbols decode. Indices from 256 on use rows drawn entirely from
the same hash, which decode with high probability but without the guarantee.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from typing import Iterable, List, Sequence

import numpy as np

from ..crypto import encode_u64, hash_bytes
from . import gf256

MAGIC = b"WSSY"
VERSION = 1
_HEADER = struct.Struct(">4sB32sIIIB")
CAUCHY_LIMIT = 256


class DecodeFailure(Exception):
    """Received symbols do not span the source space."""


@dataclass(frozen=True)
class CodingParams:
    b_sym: int
    k: int
    epsilon: float = 0.1
    m: int = 10
    s: int = 10
    f_s: int = 3

    def __post_init__(self):
        if self.b_sym <= 0 or self.k <= 0:
            raise ValueError("b_sym and k must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.m < self.k_req:
            raise ValueError(f"m={self.m} below k_req={self.k_req}")
        if self.s <= 0 or not 0 <= self.f_s <= self.s:
            raise ValueError("need s > 0 and 0 <= f_s <= s")

    @property
    def k_req(self) -> int:
        # round first so that e.g. 6 * 1.1 does not spill to 7.000000001
        return math.ceil(round(self.k * (1.0 + self.epsilon), 9))

    @classmethod
    def for_payload(cls, payload_len: int, b_sym: int, **kw) -> "CodingParams":
        return cls(b_sym=b_sym, k=math.ceil(payload_len / b_sym), **kw)


def availability_check(params: CodingParams) -> bool:
    """Enough honest storage nodes remain to collect k_req symbols."""
    return params.k_req <= params.s - params.f_s


@dataclass(frozen=True)
class EncodedSymbol:
    payload_id: bytes
    index: int
    data: bytes
    systematic: bool
    m: int = 0

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(MAGIC, VERSION, self.payload_id, self.index, self.m,
                            len(self.data), 1 if self.systematic else 0)
        return head + self.data

    @classmethod
    def from_bytes(cls, raw: bytes) -> "EncodedSymbol":
        if len(raw) < _HEADER.size:
            raise ValueError("truncated symbol container")
        magic, ver, pid, idx, m, b_sym, sysf = _HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise ValueError("bad magic")
        if ver != VERSION:
            raise ValueError(f"unsupported container version {ver}")
        data = raw[_HEADER.size:]
        if len(data) != b_sym:
            raise ValueError("symbol length does not match header")
        return cls(pid, idx, data, bool(sysf), m)


def payload_header(payload: bytes, b_sym: int) -> bytes:
    """Canonical header: length, symbol size and content digest."""
    return b"ws-payload-v1" + encode_u64(len(payload)) + encode_u64(b_sym) + hash_bytes(payload)


def payload_id_for(payload: bytes, b_sym: int) -> bytes:
    return hash_bytes(payload_header(payload, b_sym))


def split_payload(payload: bytes, b_sym: int) -> List[bytes]:
    """Cut into ceil(len / b_sym) symbols; the last one is zero padded."""
    if not payload:
        raise ValueError("empty payload")
    if b_sym <= 0:
        raise ValueError("b_sym must be positive")
    k = math.ceil(len(payload) / b_sym)
    padded = payload + bytes(k * b_sym - len(payload))
    return [padded[i * b_sym:(i + 1) * b_sym] for i in range(k)]


def _hash_stream(payload_id: bytes, index: int, length: int) -> bytes:
    out = b""
    ctr = 0
    while len(out) < length:
        out += hashlib.sha256(payload_id + encode_u64(index) + encode_u64(ctr)).digest()
        ctr += 1
    return out[:length]


def coefficient_row(payload_id: bytes, index: int, k: int) -> np.ndarray:
    """Coefficients of symbol ``index`` over the k source symbols."""
    row = np.zeros(k, dtype=np.uint8)
    if index < k:
        row[index] = 1
        return row
    if index < CAUCHY_LIMIT and k <= index:
        stream = _hash_stream(payload_id, index, 1)
        a = stream[0] or 1
        for j in range(k):
            row[j] = gf256.gf_mul(a, gf256.gf_inv(index ^ j))
        return row
    return np.frombuffer(_hash_stream(payload_id, index, k), dtype=np.uint8).copy()


def encode(source: Sequence[bytes], m: int, payload_id: bytes) -> List[EncodedSymbol]:
    k = len(source)
    if m < k:
        raise ValueError("m must be at least k")
    src = np.stack([np.frombuffer(s, dtype=np.uint8) for s in source])
    out = [EncodedSymbol(payload_id, i, bytes(source[i]), True, m) for i in range(k)]
    for i in range(k, m):
        data = gf256.combine(coefficient_row(payload_id, i, k), src)
        out.append(EncodedSymbol(payload_id, i, data.tobytes(), False, m))
    return out


def decode(symbols: Iterable[EncodedSymbol], params: CodingParams, original_len: int) -> bytes:
    """Recover the payload from verified symbols, or raise :class:`DecodeFailure`."""
    syms = list(symbols)
    if not syms:
        raise DecodeFailure("no symbols")
    k = params.k
    pid = syms[0].payload_id
    if any(s.payload_id != pid for s in syms):
        raise ValueError("symbols from different payloads")
    # fast path: all sources present
    by_index = {}
    for s in syms:
        by_index.setdefault(s.index, s)
    if all(i in by_index for i in range(k)):
        out = b"".join(by_index[i].data for i in range(k))
        return out[:original_len]
    coeffs = np.stack([coefficient_row(pid, s.index, k) for s in syms])
    data = np.stack([np.frombuffer(s.data, dtype=np.uint8) for s in syms])
    rank, x = gf256.solve(coeffs, data)
    if rank < k:
        raise DecodeFailure(f"rank {rank} < k={k}")
    return x.tobytes()[:original_len]


def rank_of(indices: Sequence[int], payload_id: bytes, k: int) -> int:
    if not indices:
        return 0
    return gf256.matrix_rank(np.stack([coefficient_row(payload_id, i, k) for i in indices]))
