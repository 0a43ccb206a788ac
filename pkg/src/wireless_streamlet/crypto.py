"""Hashing, Merkle commitments, vote signatures and the normalized election hash.

Digests and public-key ids are plain 32-byte ``bytes``; ordering of key ids is
lexicographic byte order, which is what Python already does for ``bytes``.
"""

from __future__ import annotations

import hashlib
import hmac
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Sequence

DIGEST_SIZE = 32
SIGNATURE_SIZE = 64
ZERO_DIGEST = bytes(DIGEST_SIZE)

_LEAF_PREFIX = b"\x00"
_NODE_PREFIX = b"\x01"
_TWO_64 = float(2 ** 64)


class MerkleError(ValueError):
    pass


def hash_bytes(data: bytes) -> bytes:
    """SHA-256 of ``data``."""
    return hashlib.sha256(data).digest()


def encode_u64(value: int) -> bytes:
    return int(value).to_bytes(8, "big")


def hash_nor(epoch: int, pk: bytes) -> float:
    """Map ``(epoch, pk)`` to a public pseudo-random value in (0, 1].

    The first 8 bytes of ``sha256(epoch_be64 || pk)`` are read as a big-endian
    integer ``x`` and mapped to ``(x + 1) / 2**64`` so that ``-ln(u)`` is
    always finite.
    """
    x = int.from_bytes(hashlib.sha256(encode_u64(epoch) + pk).digest()[:8], "big")
    return (x + 1) / _TWO_64


def hash_nor_neglog(epoch: int, pk: bytes) -> float:
    """``-ln(hash_nor(epoch, pk))``, computed without losing precision near u = 1."""
    x = int.from_bytes(hashlib.sha256(encode_u64(epoch) + pk).digest()[:8], "big")
    # -ln((x+1)/2^64) = -log1p((x + 1 - 2^64) / 2^64)
    return -math.log1p((x + 1 - 2 ** 64) / _TWO_64)


# ---------------------------------------------------------------------------
# Signatures


@dataclass(frozen=True)
class SignedEnvelope:
    payload: bytes
    signer: bytes
    signature: bytes


class SignatureScheme:
    """Key registry plus sign/verify.

    Verification never raises: an unknown signer or a malformed signature is
    simply reported as invalid.
    """

    name = "abstract"

    def keygen(self, seed: bytes) -> bytes:
        """Register a key pair derived from ``seed`` and return its public id."""
        raise NotImplementedError

    def sign(self, payload: bytes, signer: bytes) -> SignedEnvelope:
        raise NotImplementedError

    def verify(self, env: SignedEnvelope) -> bool:
        raise NotImplementedError

    def knows(self, pk: bytes) -> bool:
        raise NotImplementedError


class KeyedHashScheme(SignatureScheme):
    """Simulation stand-in: a 64-byte keyed BLAKE2b tag over the payload.

    The secret never leaves the registry, so a node can only produce a valid
    tag for an id it holds. Good enough inside the simulator's trust boundary
    and fast enough for Monte-Carlo runs.
    """

    name = "keyed-hash"

    def __init__(self) -> None:
        self._secrets: Dict[bytes, bytes] = {}
        self._verify_cached = lru_cache(maxsize=1 << 16)(self._verify_uncached)

    def keygen(self, seed: bytes) -> bytes:
        secret = hashlib.sha256(b"ws-secret" + seed).digest()
        pk = hashlib.sha256(b"ws-public" + secret).digest()
        self._secrets[pk] = secret
        return pk

    def knows(self, pk: bytes) -> bool:
        return pk in self._secrets

    def _tag(self, secret: bytes, signer: bytes, payload: bytes) -> bytes:
        return hashlib.blake2b(signer + payload, key=secret, digest_size=SIGNATURE_SIZE).digest()

    def sign(self, payload: bytes, signer: bytes) -> SignedEnvelope:
        secret = self._secrets.get(signer)
        if secret is None:
            raise KeyError("unknown signer")
        return SignedEnvelope(payload, signer, self._tag(secret, signer, payload))

    def _verify_uncached(self, env: SignedEnvelope) -> bool:
        secret = self._secrets.get(env.signer)
        if secret is None or len(env.signature) != SIGNATURE_SIZE:
            return False
        return hmac.compare_digest(self._tag(secret, env.signer, env.payload), env.signature)

    def verify(self, env: SignedEnvelope) -> bool:
        return self._verify_cached(env)


class Ed25519Scheme(SignatureScheme):
    """Real asymmetric signatures (Ed25519: 32-byte keys, 64-byte signatures)."""

    name = "ed25519"

    def __init__(self) -> None:
        from cryptography.hazmat.primitives.asymmetric import ed25519

        self._ed = ed25519
        self._private: Dict[bytes, object] = {}
        self._public: Dict[bytes, object] = {}

    def keygen(self, seed: bytes) -> bytes:
        from cryptography.hazmat.primitives import serialization

        sk = self._ed.Ed25519PrivateKey.from_private_bytes(hashlib.sha256(b"ws-ed" + seed).digest())
        pub = sk.public_key()
        pk = pub.public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)
        self._private[pk] = sk
        self._public[pk] = pub
        return pk

    def knows(self, pk: bytes) -> bool:
        return pk in self._public

    def sign(self, payload: bytes, signer: bytes) -> SignedEnvelope:
        sk = self._private.get(signer)
        if sk is None:
            raise KeyError("unknown signer")
        return SignedEnvelope(payload, signer, sk.sign(payload))

    def verify(self, env: SignedEnvelope) -> bool:
        from cryptography.exceptions import InvalidSignature

        pub = self._public.get(env.signer)
        if pub is None:
            return False
        try:
            pub.verify(env.signature, env.payload)
        except (InvalidSignature, ValueError):
            return False
        return True


def make_scheme(name: str) -> SignatureScheme:
    if name == KeyedHashScheme.name:
        return KeyedHashScheme()
    if name == Ed25519Scheme.name:
        return Ed25519Scheme()
    raise ValueError(f"unknown signature scheme {name!r}")


# ---------------------------------------------------------------------------
# Merkle trees


@dataclass(frozen=True)
class MerkleProof:
    leaf_index: int
    siblings: tuple
    tree_size: int

    def to_bytes(self) -> bytes:
        return (
            encode_u64(self.leaf_index)
            + encode_u64(self.tree_size)
            + encode_u64(len(self.siblings))
            + b"".join(self.siblings)
        )

    @classmethod
    def from_bytes(cls, raw: bytes) -> "MerkleProof":
        idx = int.from_bytes(raw[0:8], "big")
        size = int.from_bytes(raw[8:16], "big")
        count = int.from_bytes(raw[16:24], "big")
        body = raw[24:]
        if len(body) != count * DIGEST_SIZE:
            raise MerkleError("truncated proof")
        sibs = tuple(body[i * DIGEST_SIZE:(i + 1) * DIGEST_SIZE] for i in range(count))
        return cls(idx, sibs, size)


def _leaf(d: bytes) -> bytes:
    return hash_bytes(_LEAF_PREFIX + d)


def _node(a: bytes, b: bytes) -> bytes:
    return hash_bytes(_NODE_PREFIX + a + b)


def _levels(leaves: Sequence[bytes]) -> List[List[bytes]]:
    if not leaves:
        raise MerkleError("empty leaf list")
    level = [_leaf(x) for x in leaves]
    levels = [level]
    while len(level) > 1:
        if len(level) % 2:
            level = level + [level[-1]]
            levels[-1] = level
        level = [_node(level[i], level[i + 1]) for i in range(0, len(level), 2)]
        levels.append(level)
    return levels


def merkle_root(leaves: Sequence[bytes]) -> bytes:
    """Binary Merkle root, 0x00/0x01 domain separated, odd levels duplicate the last node."""
    return _levels(leaves)[-1][0]


def merkle_prove(leaves: Sequence[bytes], index: int) -> MerkleProof:
    if not 0 <= index < len(leaves):
        raise MerkleError(f"leaf index {index} out of range for {len(leaves)} leaves")
    levels = _levels(leaves)
    sibs = []
    pos = index
    for level in levels[:-1]:
        sibs.append(level[pos ^ 1])
        pos //= 2
    return MerkleProof(index, tuple(sibs), len(leaves))


def proof_depth(tree_size: int) -> int:
    return math.ceil(math.log2(tree_size)) if tree_size > 1 else 0


def merkle_verify(root: bytes, index: int, leaf: bytes, proof: MerkleProof) -> bool:
    if proof.leaf_index != index or not 0 <= index < proof.tree_size:
        return False
    if len(proof.siblings) != proof_depth(proof.tree_size):
        return False
    acc = _leaf(leaf)
    pos = index
    for sib in proof.siblings:
        if len(sib) != DIGEST_SIZE:
            return False
        acc = _node(acc, sib) if pos % 2 == 0 else _node(sib, acc)
        pos //= 2
    return hmac.compare_digest(acc, root)
