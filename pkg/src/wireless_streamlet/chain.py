"""State blocks, CSI-tagged votes, quorum certificates and per-node chain state.

A block is *chain-notarized* when it and every ancestor back to genesis are
notarized; the longest notarized chain is the deepest such block. Finality
follows the run-of-three rule: three chain-notarized blocks with consecutive
epochs finalize the path through the middle one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Set, Tuple

from .crypto import DIGEST_SIZE, ZERO_DIGEST, SignatureScheme, SignedEnvelope, hash_bytes

BLOCK_ENCODING_SIZE = 8 + 32 * 4 + 8
VOTE_ENCODING_SIZE = 8 + 32 + 1


class SafetyViolation(RuntimeError):
    """Two different blocks finalized at the same height."""


@dataclass(frozen=True)
class StateBlock:
    epoch: int
    parent: bytes
    payload_id: bytes
    data_commitment: bytes
    proposer: bytes
    height: int

    def encode(self) -> bytes:
        for name in ("parent", "payload_id", "data_commitment", "proposer"):
            if len(getattr(self, name)) != DIGEST_SIZE:
                raise ValueError(f"{name} must be {DIGEST_SIZE} bytes")
        return (
            self.epoch.to_bytes(8, "big")
            + self.parent
            + self.payload_id
            + self.data_commitment
            + self.proposer
            + self.height.to_bytes(8, "big")
        )

    @classmethod
    def decode(cls, raw: bytes) -> "StateBlock":
        if len(raw) != BLOCK_ENCODING_SIZE:
            raise ValueError("bad block encoding length")
        return cls(
            epoch=int.from_bytes(raw[0:8], "big"),
            parent=raw[8:40],
            payload_id=raw[40:72],
            data_commitment=raw[72:104],
            proposer=raw[104:136],
            height=int.from_bytes(raw[136:144], "big"),
        )

    @property
    def digest(self) -> bytes:
        d = self.__dict__.get("_digest")
        if d is None:
            d = hash_bytes(self.encode())
            object.__setattr__(self, "_digest", d)
        return d


GENESIS = StateBlock(0, ZERO_DIGEST, ZERO_DIGEST, ZERO_DIGEST, ZERO_DIGEST, 0)


def encode_vote_body(epoch: int, block_hash: bytes, csi_tag: int) -> bytes:
    return epoch.to_bytes(8, "big") + block_hash + bytes([csi_tag])


@dataclass(frozen=True)
class Vote:
    epoch: int
    block_hash: bytes
    csi_tag: int
    envelope: SignedEnvelope

    @property
    def signer(self) -> bytes:
        return self.envelope.signer

    @classmethod
    def create(cls, scheme: SignatureScheme, signer: bytes, epoch: int, block_hash: bytes,
               csi_tag: int) -> "Vote":
        env = scheme.sign(encode_vote_body(epoch, block_hash, csi_tag), signer)
        return cls(epoch, block_hash, csi_tag, env)

    def well_formed(self) -> bool:
        return (
            0 <= self.csi_tag <= 255
            and len(self.block_hash) == DIGEST_SIZE
            and self.envelope.payload == encode_vote_body(self.epoch, self.block_hash, self.csi_tag)
        )

    def to_bytes(self) -> bytes:
        env = self.envelope
        return env.payload + env.signer + env.signature

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Vote":
        body = raw[:VOTE_ENCODING_SIZE]
        signer = raw[VOTE_ENCODING_SIZE:VOTE_ENCODING_SIZE + 32]
        sig = raw[VOTE_ENCODING_SIZE + 32:]
        epoch = int.from_bytes(body[:8], "big")
        return cls(epoch, body[8:40], body[40], SignedEnvelope(body, signer, sig))


def vote_valid(vote: Vote, scheme: SignatureScheme, members: Optional[Set[bytes]] = None) -> bool:
    if members is not None and vote.signer not in members:
        return False
    return vote.well_formed() and scheme.verify(vote.envelope)


@dataclass(frozen=True)
class QuorumCertificate:
    block_hash: bytes
    epoch: int
    votes: Tuple[Vote, ...]

    @property
    def signers(self) -> List[bytes]:
        return [v.signer for v in self.votes]

    def verify(self, scheme: SignatureScheme, f: int, members: Optional[Set[bytes]] = None) -> bool:
        seen = set()
        for v in self.votes:
            if v.epoch != self.epoch or v.block_hash != self.block_hash:
                return False
            if v.signer in seen or not vote_valid(v, scheme, members):
                return False
            seen.add(v.signer)
        return len(seen) >= 2 * f + 1

    def to_bytes(self) -> bytes:
        out = [self.block_hash, self.epoch.to_bytes(8, "big"), len(self.votes).to_bytes(4, "big")]
        for v in self.votes:
            raw = v.to_bytes()
            out.append(len(raw).to_bytes(2, "big"))
            out.append(raw)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "QuorumCertificate":
        block_hash = raw[:32]
        epoch = int.from_bytes(raw[32:40], "big")
        count = int.from_bytes(raw[40:44], "big")
        pos = 44
        votes = []
        for _ in range(count):
            ln = int.from_bytes(raw[pos:pos + 2], "big")
            votes.append(Vote.from_bytes(raw[pos + 2:pos + 2 + ln]))
            pos += 2 + ln
        return cls(block_hash, epoch, tuple(votes))


def is_notarized(block_hash: bytes, epoch: int, votes: Iterable[Vote], f: int,
                 scheme: SignatureScheme, members: Optional[Set[bytes]] = None
                 ) -> Optional[QuorumCertificate]:
    """Return a QC when at least 2f+1 distinct signers validly voted for the block.

    Malformed or badly signed votes and repeated signers are ignored.
    """
    chosen: Dict[bytes, Vote] = {}
    for v in votes:
        if v.epoch != epoch or v.block_hash != block_hash or v.signer in chosen:
            continue
        if vote_valid(v, scheme, members):
            chosen[v.signer] = v
    if len(chosen) < 2 * f + 1:
        return None
    ordered = tuple(chosen[s] for s in sorted(chosen))
    return QuorumCertificate(block_hash, epoch, ordered)


@dataclass
class ChainState:
    """One node's view of the block tree."""

    blocks: Dict[bytes, StateBlock] = field(default_factory=dict)
    qcs: Dict[bytes, Optional[QuorumCertificate]] = field(default_factory=dict)
    # justify[d] is the QC for d's parent that travelled with block d
    justify: Dict[bytes, Optional[QuorumCertificate]] = field(default_factory=dict)
    finalized_tip: bytes = GENESIS.digest
    finalized_height: int = 0

    def __post_init__(self):
        g = GENESIS.digest
        self.blocks.setdefault(g, GENESIS)
        self.qcs.setdefault(g, None)
        self.justify.setdefault(g, None)
        self._children: Dict[bytes, List[bytes]] = {}
        self._chain_ok: Set[bytes] = {g}
        self._best: bytes = g
        self._fresh: List[bytes] = []
        self._finalized_path: List[bytes] = [g]

    # -- queries -----------------------------------------------------------

    @property
    def notarized(self) -> Set[bytes]:
        return set(self.qcs)

    def is_block_notarized(self, d: bytes) -> bool:
        return d in self.qcs

    def chain_notarized(self, d: bytes) -> bool:
        return d in self._chain_ok

    @property
    def longest_tip(self) -> bytes:
        return self._best

    @property
    def longest_height(self) -> int:
        return self.blocks[self._best].height

    def path_to(self, d: bytes) -> List[StateBlock]:
        out = []
        while True:
            b = self.blocks[d]
            out.append(b)
            if b.height == 0:
                break
            d = b.parent
        out.reverse()
        return out

    def finalized_chain(self) -> List[StateBlock]:
        return [self.blocks[d] for d in self._finalized_path]

    def finalized_digests(self) -> List[bytes]:
        return list(self._finalized_path)

    # -- mutation ----------------------------------------------------------

    def add_block(self, block: StateBlock, justify: Optional[QuorumCertificate] = None) -> bool:
        """Store a header (first copy wins). Returns True if it was new."""
        d = block.digest
        if d in self.blocks:
            return False
        self.blocks[d] = block
        self.justify[d] = justify
        self._children.setdefault(block.parent, []).append(d)
        if d in self.qcs:
            self._try_extend(d)
        return True

    def add_qc(self, block_hash: bytes, qc: Optional[QuorumCertificate]) -> bool:
        """Mark a block notarized. The header may arrive later."""
        if block_hash in self.qcs:
            return False
        self.qcs[block_hash] = qc
        if block_hash in self.blocks:
            self._try_extend(block_hash)
        return True

    def _try_extend(self, d: bytes) -> None:
        b = self.blocks[d]
        if b.parent not in self._chain_ok or d in self._chain_ok:
            return
        stack = [d]
        while stack:
            x = stack.pop()
            if x in self._chain_ok:
                continue
            self._chain_ok.add(x)
            self._fresh.append(x)
            self._consider_best(x)
            for c in self._children.get(x, ()):
                if c in self.qcs and c in self.blocks:
                    stack.append(c)

    def _consider_best(self, d: bytes) -> None:
        h = self.blocks[d].height
        bh = self.blocks[self._best].height
        if h > bh or (h == bh and d < self._best):
            self._best = d

    def update_finality(self) -> List[StateBlock]:
        """Apply the run-of-three rule to newly chain-notarized blocks.

        Returns the blocks that became final, in height order. Raises
        :class:`SafetyViolation` if a run would finalize a conflicting block.
        """
        fresh, self._fresh = self._fresh, []
        runs = []
        for d3 in fresh:
            b3 = self.blocks[d3]
            if b3.height < 3:
                continue
            b2 = self.blocks[b3.parent]
            b1 = self.blocks[b2.parent]
            if b2.epoch + 1 == b3.epoch and b1.epoch + 1 == b2.epoch:
                runs.append(b2.digest)
        if not runs:
            return []
        target = max(runs, key=lambda d: self.blocks[d].height)
        new: List[StateBlock] = []
        if self.blocks[target].height > self.finalized_height:
            # walk back only as far as the current finalized height
            d = target
            while self.blocks[d].height > self.finalized_height:
                new.append(self.blocks[d])
                d = self.blocks[d].parent
            if d != self.finalized_tip:
                raise SafetyViolation("finalized chain would fork")
            new.reverse()
            self._finalized_path.extend(b.digest for b in new)
            self.finalized_tip = target
            self.finalized_height = self.blocks[target].height
        # every other run must agree with the finalized path as well
        for d in runs:
            self._check_consistent(d)
        return new

    def _check_consistent(self, d: bytes) -> None:
        b = self.blocks[d]
        if self._finalized_path[b.height] != d:
            raise SafetyViolation(f"conflicting finalization at height {b.height}")


def longest_notarized_chain(state: ChainState) -> List[StateBlock]:
    return state.path_to(state.longest_tip)


def update_finality(state: ChainState) -> List[StateBlock]:
    return state.update_finality()


def voting_eligibility(view: ChainState, proposal: StateBlock, expected_leader: bytes,
                       current_epoch: Optional[int] = None) -> bool:
    """Would an honest node vote for ``proposal``?

    The proposer must be the elected leader, the block must belong to the
    current epoch and extend the tip of one of the longest notarized chains.
    """
    if proposal.proposer != expected_leader:
        return False
    if current_epoch is not None and proposal.epoch != current_epoch:
        return False
    parent = view.blocks.get(proposal.parent)
    if parent is None or not view.chain_notarized(proposal.parent):
        return False
    if parent.height != view.longest_height:
        return False
    if proposal.height != parent.height + 1 or proposal.epoch <= parent.epoch:
        return False
    return True
