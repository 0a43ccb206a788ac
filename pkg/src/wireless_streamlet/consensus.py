"""Per-node Streamlet state machines driven epoch by epoch over the TDMA engine.

Leader proposals carry the leader's notarized ancestry as (header, justify)
pairs, where ``justify`` is the QC for the header's parent that travelled with
it. A node that missed earlier epochs walks that ancestry back to the first
block it already holds as notarized and catches up from there.

Weight tables come from the finalized checkpoint that every honest node has
reached (the smallest honest finalized height). Each node derives its own
table from its own chain truncated at that height; the engine checks that
all honest nodes agree on the elected leader.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from . import cale
from .chain import (GENESIS, ChainState, QuorumCertificate, SafetyViolation, StateBlock, Vote,
                    vote_valid, voting_eligibility)
from .channel import LinkMatrix, TAG_MAX
from .crypto import SignatureScheme, SignedEnvelope, encode_u64, hash_bytes, make_scheme
from .tdma import EpochSchedule, EpochTrace, FaultPlan, epoch_duration, run_epoch

POLICIES = ("cale", "random", "oracle", "forced")

Ancestry = Callable[[], Iterator[Tuple[StateBlock, Optional[QuorumCertificate]]]]


@dataclass(frozen=True)
class Proposal:
    block: StateBlock
    justify: Optional[QuorumCertificate]
    envelope: SignedEnvelope
    ancestry: Ancestry = field(compare=False, repr=False)


@dataclass(frozen=True)
class Abstain:
    epoch: int
    envelope: SignedEnvelope


@dataclass(frozen=True)
class TipAnnounce:
    """Sender's longest notarized tip, piggybacked on its vote-slot frame.

    QCs are self-certifying, so receivers need no trust in the sender. This
    costs no extra attempts and keeps a node that missed a notarization
    (often the leader itself) from proposing on a stale tip forever.
    """

    block: StateBlock
    qc: Optional[QuorumCertificate]
    ancestry: Ancestry = field(compare=False, repr=False)


def _walk_back(chain: ChainState, start: bytes) -> Ancestry:
    def gen():
        d = start
        g = GENESIS.digest
        while d != g:
            b = chain.blocks[d]
            yield b, chain.justify[d]
            d = b.parent
    return gen


class NodeRuntime:
    """One simulated node: chain view, vote log, vote tallies and weights."""

    def __init__(self, index: int, pk: bytes, scheme: SignatureScheme, f: int,
                 members: Sequence[bytes], omega_min: float = cale.OMEGA_MIN,
                 alpha: float = cale.ALPHA, role: Optional[str] = None):
        self.index = index
        self.pk = pk
        self.scheme = scheme
        self.f = f
        self.members = tuple(members)
        self._member_set = set(members)
        self.role = role
        self.chain = ChainState()
        self.vote_log: Dict[int, List[bytes]] = {}
        self.omega_min = omega_min
        self.alpha = alpha
        self._omega = {pk_: 1.0 for pk_ in self.members}
        self._weights_upto = 0
        self.weight_table = cale.WeightTable.uniform(self.members, omega_min, alpha)
        self.epoch = -1
        self.expected_leader: Optional[bytes] = None
        self._received: List[Proposal] = []
        self._eligible: Optional[Proposal] = None
        self._tag = 0
        self._tally: Dict[Tuple[int, bytes], Dict[bytes, Vote]] = {}
        self._own: List[bytes] = []
        self.rejected_qcs = 0

    @property
    def honest(self) -> bool:
        return self.role is None

    # -- weights -------------------------------------------------------------

    def refresh_weights(self, checkpoint_height: int) -> cale.WeightTable:
        """Advance the weight table to a finalized checkpoint.

        Block j on the finalized path is scored from the justify QC carried by
        block j+1, so only blocks strictly below the checkpoint contribute.
        """
        path = self.chain.finalized_digests()
        upto = min(checkpoint_height, len(path) - 1)
        if upto <= self._weights_upto:
            return self.weight_table
        basis = self.weight_table.epoch_basis
        for j in range(max(1, self._weights_upto), upto):
            blk = self.chain.blocks[path[j]]
            qc = self.chain.justify[path[j + 1]]
            if blk.proposer in self._omega:
                self._omega[blk.proposer] = cale.connectivity_score(qc, proposer=blk.proposer)
            basis = blk.epoch
        self._weights_upto = upto
        self.weight_table = cale.WeightTable(
            basis, self.members, tuple(self._omega[p] for p in self.members),
            self.omega_min, self.alpha)
        return self.weight_table

    # -- epoch lifecycle -------------------------------------------------------

    def begin_epoch(self, epoch: int, expected_leader: bytes) -> None:
        self.epoch = epoch
        self.expected_leader = expected_leader
        self._received = []
        self._eligible = None
        self._tag = 0
        self._own = []
        for key in [k for k in self._tally if k[0] < epoch]:
            del self._tally[key]

    def build_proposals(self, epoch: int, equivocate: bool = False) -> List[Proposal]:
        parent = self.chain.longest_tip
        pblock = self.chain.blocks[parent]
        justify = self.chain.qcs.get(parent)
        out = []
        for variant in range(2 if equivocate else 1):
            payload_id = hash_bytes(b"payload-header" + self.pk + encode_u64(epoch) + bytes([variant]))
            block = StateBlock(epoch, parent, payload_id, hash_bytes(b"commitment" + payload_id),
                               self.pk, pblock.height + 1)
            env = self.scheme.sign(block.encode(), self.pk)
            self.chain.add_block(block, justify)
            self._own.append(block.digest)
            out.append(Proposal(block, justify, env, _walk_back(self.chain, parent)))
        return out

    def _accept_qc(self, block_hash: bytes, qc: Optional[QuorumCertificate]) -> bool:
        if self.chain.is_block_notarized(block_hash):
            return True
        if qc is None or qc.block_hash != block_hash:
            return False
        if not qc.verify(self.scheme, self.f, self._member_set):
            self.rejected_qcs += 1
            return False
        self.chain.add_qc(block_hash, qc)
        return True

    def _catch_up(self, ancestry: Ancestry) -> bool:
        """Adopt (header, justify) pairs back to the first chain-notarized block."""
        items = []
        for blk, just in ancestry():
            if self.chain.chain_notarized(blk.digest):
                break
            items.append((blk, just))
        for blk, just in reversed(items):
            if blk.height == 0:
                return False
            if not self._accept_qc(blk.parent, just):
                return False
            self.chain.add_block(blk, just)
        return True

    def _merge(self, prop: Proposal) -> bool:
        parent = prop.block.parent
        if not self.chain.chain_notarized(parent) and not self._catch_up(prop.ancestry):
            return False
        if parent != GENESIS.digest and not self._accept_qc(parent, prop.justify):
            return False
        return self.chain.chain_notarized(parent)

    def tip_announce(self) -> Optional[TipAnnounce]:
        tip = self.chain.longest_tip
        if tip == GENESIS.digest:
            return None
        return TipAnnounce(self.chain.blocks[tip], self.chain.qcs[tip], _walk_back(self.chain, tip))

    def _receive_tip(self, ann: TipAnnounce) -> None:
        if ann.block.height <= self.chain.longest_height:
            return
        # the ancestry starts at the tip, so this also stores the tip header
        if self._catch_up(ann.ancestry):
            self._accept_qc(ann.block.digest, ann.qc)

    def receive_proposal(self, prop: Proposal, epoch: int, tag: Optional[int]) -> None:
        block = prop.block
        env = prop.envelope
        if env.signer != block.proposer or env.payload != block.encode():
            return
        if not self.scheme.verify(env):
            return
        if any(p.block.digest == block.digest for p in self._received):
            return
        merged = self._merge(prop)
        self.chain.add_block(block, prop.justify)
        first = not self._received
        self._received.append(prop)
        if first:
            self._tag = 0 if tag is None else tag
            if merged and voting_eligibility(self.chain, block, self.expected_leader, epoch):
                self._eligible = prop

    def make_votes(self, epoch: int, misreport: bool = False, collude: bool = False) -> list:
        tag = TAG_MAX if misreport else self._tag
        if collude:
            targets = [p.block for p in self._received if p.block.proposer == self.expected_leader]
        else:
            targets = [self._eligible.block] if self._eligible is not None else []
        votes = []
        for blk in targets:
            votes.append(Vote.create(self.scheme, self.pk, epoch, blk.digest, tag))
            self.vote_log.setdefault(epoch, []).append(blk.digest)
        if not votes:
            env = self.scheme.sign(b"abstain" + encode_u64(epoch), self.pk)
            votes = [Abstain(epoch, env)]
        ann = self.tip_announce()
        return votes + [ann] if ann is not None else votes

    def receive_frame(self, frame) -> bool:
        """Process one decoded frame; True when it is a valid vote of this epoch."""
        if isinstance(frame, TipAnnounce):
            self._receive_tip(frame)
            return False
        if not isinstance(frame, Vote):
            return False
        if frame.epoch != self.epoch or not vote_valid(frame, self.scheme, self._member_set):
            return False
        key = (frame.epoch, frame.block_hash)
        tally = self._tally.setdefault(key, {})
        if frame.signer in tally:
            return True
        tally[frame.signer] = frame
        if len(tally) == 2 * self.f + 1 and not self.chain.is_block_notarized(frame.block_hash):
            votes = tuple(tally[s] for s in sorted(tally))
            self.chain.add_qc(frame.block_hash, QuorumCertificate(frame.block_hash, frame.epoch, votes))
        return True

    def leader_quorum(self, epoch: int) -> bool:
        need = 2 * self.f + 1
        return any(len(self._tally.get((epoch, d), ())) >= need for d in self._own)


# ---------------------------------------------------------------------------


@dataclass
class ConsensusConfig:
    links: LinkMatrix
    f: Optional[int] = None
    t_slot: float = 10.0
    t_guard: float = 5.0
    k_tx: int = 2
    policy: str = "cale"
    alpha: float = cale.ALPHA
    omega_min: float = cale.OMEGA_MIN
    faults: FaultPlan = field(default_factory=FaultPlan)
    scheme: str = "keyed-hash"
    forced_leader: Optional[int] = None
    record_traces: bool = False

    def __post_init__(self):
        n = self.links.n
        if self.f is None:
            self.f = (n - 1) // 3
        if n < 3 * self.f + 1:
            raise ValueError(f"n={n} violates n >= 3f+1 for f={self.f}")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown election policy {self.policy!r}")
        if self.policy == "forced" and self.forced_leader is None:
            raise ValueError("forced policy needs forced_leader")
        if len(self.faults.modes) > self.f:
            raise ValueError("more faulty nodes than f")

    @property
    def n(self) -> int:
        return self.links.n

    @property
    def schedule(self) -> EpochSchedule:
        return EpochSchedule(self.n, self.t_slot, self.t_guard, self.k_tx)


@dataclass
class RunMetrics:
    epochs_run: int = 0
    notarized_flags: List[bool] = field(default_factory=list)
    honest_leader_epochs: int = 0
    leader_agreement_epochs: int = 0
    on_air_attempts: List[int] = field(default_factory=list)
    finality_events: List[Tuple[int, float]] = field(default_factory=list)
    block_finality_latencies: List[float] = field(default_factory=list)
    honest_double_votes: int = 0
    conflicting_finalizations: int = 0
    t_epoch: float = 0.0

    @property
    def notarized_count(self) -> int:
        return sum(self.notarized_flags)

    @property
    def notarization_rate(self) -> float:
        return self.notarized_count / self.epochs_run if self.epochs_run else 0.0

    @property
    def honest_leader_fraction(self) -> float:
        return self.honest_leader_epochs / self.epochs_run if self.epochs_run else 0.0

    @property
    def leader_uniqueness(self) -> float:
        return self.leader_agreement_epochs / self.epochs_run if self.epochs_run else 1.0

    def epochs_to_finality(self) -> List[int]:
        """Renewal cycle lengths: epochs from a reset until three successes in a row."""
        out = []
        run = 0
        length = 0
        for ok in self.notarized_flags:
            length += 1
            run = run + 1 if ok else 0
            if run == 3:
                out.append(length)
                run = 0
                length = 0
        return out

    def finality_latencies(self) -> List[float]:
        return [c * self.t_epoch for c in self.epochs_to_finality()]

    def mean_finality_latency(self) -> float:
        lat = self.finality_latencies()
        return float(np.mean(lat)) if lat else math.inf

    def finality_latency_percentile(self, q: float) -> float:
        lat = self.finality_latencies()
        return float(np.percentile(lat, q)) if lat else math.inf


@dataclass
class ConsensusResult:
    metrics: RunMetrics
    nodes: List[NodeRuntime]
    traces: List[EpochTrace]


def oracle_leader_baseline(link: LinkMatrix, honest: Optional[Sequence[int]] = None
                           ) -> Callable[[int, Sequence[bytes]], int]:
    """Leader chooser with full link knowledge (upper-bound baseline only).

    Picks among honest nodes the one whose worst outgoing link to another
    honest node is best; ties rotate by the public per-epoch hash.
    """
    n = link.n
    honest = list(range(n)) if honest is None else list(honest)

    def score(i):
        others = [link.p[i, j] for j in honest if j != i]
        return min(others) if others else 1.0

    scores = {i: score(i) for i in honest}
    top = max(scores.values())
    best = sorted(i for i in honest if scores[i] == top)

    def choose(epoch: int, pks: Sequence[bytes]) -> int:
        if len(best) == 1:
            return best[0]
        winner = cale.elect_uniform(epoch, [pks[i] for i in best])
        return pks.index(winner)

    return choose


def make_keys(scheme: SignatureScheme, n: int, rng: np.random.Generator) -> List[bytes]:
    pks = [scheme.keygen(rng.bytes(16)) for _ in range(n)]
    if len(set(pks)) != n:
        raise RuntimeError("key collision")
    return pks


def run_consensus(config: ConsensusConfig, epochs: int, rng: np.random.Generator,
                  csi_rng: Optional[np.random.Generator] = None) -> ConsensusResult:
    """Run ``epochs`` epochs starting from genesis.

    Raises :class:`SafetyViolation` if two nodes ever finalize different
    blocks at the same height.
    """
    if epochs < 1:
        raise ValueError("epochs must be positive")
    n, f = config.n, config.f
    scheme = make_scheme(config.scheme)
    pks = make_keys(scheme, n, rng)
    plan = config.faults
    nodes = [NodeRuntime(i, pks[i], scheme, f, pks, config.omega_min, config.alpha, plan.mode(i))
             for i in range(n)]
    honest = plan.honest_nodes(n)
    sched = config.schedule
    t_epoch = epoch_duration(sched)
    oracle = oracle_leader_baseline(config.links, honest) if config.policy == "oracle" else None
    uniform = cale.WeightTable.uniform(pks)

    metrics = RunMetrics(t_epoch=t_epoch)
    traces: List[EpochTrace] = []
    global_final: Dict[int, bytes] = {}
    first_final_epoch: Dict[bytes, int] = {}
    index_of = {pk: i for i, pk in enumerate(pks)}
    checkpoint = 0

    for epoch in range(1, epochs + 1):
        if config.policy == "cale":
            views = []
            for nd in nodes:
                table = nd.refresh_weights(checkpoint)
                views.append(index_of[cale.elect_leader(epoch, table)])
        elif config.policy == "random":
            views = [index_of[cale.elect_leader(epoch, uniform)]] * n
        elif config.policy == "oracle":
            views = [oracle(epoch, pks)] * n
        else:
            views = [config.forced_leader] * n
        honest_views = {views[i] for i in honest}
        if len(honest_views) == 1:
            metrics.leader_agreement_epochs += 1
        leader = views[honest[0]] if honest else views[0]
        for i, nd in enumerate(nodes):
            nd.begin_epoch(epoch, pks[views[i]])

        trace = run_epoch(sched, config.links, leader, nodes, plan, rng, epoch)
        metrics.epochs_run += 1
        metrics.notarized_flags.append(trace.notarized)
        metrics.on_air_attempts.append(trace.on_air_attempts)
        if not plan.is_faulty(leader):
            metrics.honest_leader_epochs += 1
        if config.record_traces:
            traces.append(trace)

        for nd in nodes:
            try:
                newly = nd.chain.update_finality()
            except SafetyViolation:
                metrics.conflicting_finalizations += 1
                raise
            for b in newly:
                prev = global_final.setdefault(b.height, b.digest)
                if prev != b.digest:
                    metrics.conflicting_finalizations += 1
                    raise SafetyViolation(f"nodes disagree at finalized height {b.height}")
                if b.digest not in first_final_epoch:
                    first_final_epoch[b.digest] = epoch
                    metrics.block_finality_latencies.append((epoch - b.epoch + 1) * t_epoch)
                    metrics.finality_events.append((epoch, epoch * t_epoch))
        if honest:
            checkpoint = min(nodes[i].chain.finalized_height for i in honest)

    for i in honest:
        metrics.honest_double_votes += sum(1 for v in nodes[i].vote_log.values() if len(v) > 1)
    return ConsensusResult(metrics, nodes, traces)
