"""Per-symbol hashes and the Merkle commitment binding them to a payload id."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ..crypto import (DIGEST_SIZE, MerkleProof, encode_u64, hash_bytes, merkle_prove,
                      merkle_root, merkle_verify)
from .coding import EncodedSymbol


def symbol_hash(payload_id: bytes, index: int, data: bytes) -> bytes:
    """h_i = hash(id_p || be64(i) || q_i)."""
    return hash_bytes(payload_id + encode_u64(index) + data)


@dataclass(frozen=True)
class CommitmentBundle:
    payload_id: bytes
    symbol_hashes: tuple
    root: bytes
    proofs: tuple

    @property
    def m(self) -> int:
        return len(self.symbol_hashes)

    def proof(self, index: int) -> MerkleProof:
        return self.proofs[index]

    def to_bytes(self) -> bytes:
        return (self.payload_id + encode_u64(self.m) + b"".join(self.symbol_hashes) + self.root)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "CommitmentBundle":
        pid = raw[:32]
        m = int.from_bytes(raw[32:40], "big")
        body = raw[40:]
        if len(body) != (m + 1) * DIGEST_SIZE:
            raise ValueError("bad commitment bundle length")
        hashes = [body[i * 32:(i + 1) * 32] for i in range(m)]
        root = body[m * 32:]
        if merkle_root(hashes) != root:
            raise ValueError("root does not match symbol hashes")
        proofs = tuple(merkle_prove(hashes, i) for i in range(m))
        return cls(pid, tuple(hashes), root, proofs)


def commit(payload_id: bytes, symbols: Sequence[EncodedSymbol]) -> CommitmentBundle:
    for i, s in enumerate(symbols):
        if s.index != i:
            raise ValueError("symbols must be complete and ordered by index")
        if s.payload_id != payload_id:
            raise ValueError("symbol belongs to another payload")
    hashes = [symbol_hash(payload_id, s.index, s.data) for s in symbols]
    proofs = tuple(merkle_prove(hashes, i) for i in range(len(hashes)))
    return CommitmentBundle(payload_id, tuple(hashes), merkle_root(hashes), proofs)


def verify_symbol(root: bytes, payload_id: bytes, index: int, data: bytes,
                  proof: MerkleProof) -> bool:
    """Recompute h_i and check its inclusion under ``root``."""
    if index < 0 or index >= proof.tree_size:
        return False
    return merkle_verify(root, index, symbol_hash(payload_id, index, data), proof)
