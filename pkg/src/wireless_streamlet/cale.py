"""Channel-aware leader election.

Each finalized block credits its proposer with a connectivity score: the
lower median of ``log2(1 + gamma)`` over the CSI tags in the block's QC.
Weights are the scores normalised by their mean (with a positive floor), and
the leader of an epoch is the node with the smallest ``-ln(u_i) / w_i**alpha``
where ``u_i`` is the public hash of ``(epoch, pk_i)``. That rule picks node i
with probability ``w_i**alpha / sum_k w_k**alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterable, Optional, Sequence, Tuple

from .channel import dequantize
from .chain import QuorumCertificate, StateBlock
from .crypto import hash_nor_neglog

OMEGA_MIN = 0.01
ALPHA = 1.0


def lower_median(values: Sequence[float]) -> float:
    if not values:
        raise ValueError("median of an empty sequence")
    s = sorted(values)
    return s[(len(s) - 1) // 2]


def tag_score(tag: int) -> float:
    return math.log2(1.0 + dequantize(tag))


def connectivity_score(qc: QuorumCertificate, f: Optional[int] = None,
                       proposer: Optional[bytes] = None) -> float:
    """Lower median of log2(1 + gamma) over the QC's CSI tags.

    When ``proposer`` is given its own vote is left out: a leader does not
    measure the channel to itself.
    """
    if not qc.votes:
        raise ValueError("empty quorum certificate")
    signers = {v.signer for v in qc.votes}
    if len(signers) != len(qc.votes):
        raise ValueError("duplicate signer in quorum certificate")
    if f is not None and len(signers) < 2 * f + 1:
        raise ValueError("quorum certificate below 2f+1 votes")
    tags = [v.csi_tag for v in qc.votes if v.signer != proposer]
    if not tags:
        tags = [v.csi_tag for v in qc.votes]
    return lower_median([tag_score(t) for t in tags])


@dataclass(frozen=True)
class WeightTable:
    epoch_basis: int
    nodes: Tuple[bytes, ...]
    omega_fin: Tuple[float, ...]
    omega_min: float = OMEGA_MIN
    alpha: float = ALPHA

    @cached_property
    def baseline(self) -> float:
        return sum(self.omega_fin) / len(self.omega_fin)

    @cached_property
    def weights(self) -> Tuple[float, ...]:
        base = self.baseline
        return tuple(max(o, self.omega_min) / base for o in self.omega_fin)

    def weight_of(self, pk: bytes) -> float:
        return self.weights[self.nodes.index(pk)]

    @classmethod
    def uniform(cls, nodes: Iterable[bytes], omega_min: float = OMEGA_MIN,
                alpha: float = ALPHA) -> "WeightTable":
        nodes = tuple(nodes)
        return cls(0, nodes, (1.0,) * len(nodes), omega_min, alpha)


def update_weights(finalized_chain: Sequence[Tuple[StateBlock, QuorumCertificate]],
                   nodes: Sequence[bytes], omega_min: float = OMEGA_MIN,
                   alpha: float = ALPHA) -> WeightTable:
    """Build a weight table from (block, QC certifying that block) pairs.

    Later entries override earlier ones, so each node keeps the score of the
    most recent finalized block it proposed. Nodes that never proposed stay
    at 1.
    """
    if omega_min <= 0:
        raise ValueError("omega_min must be positive")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    index = {pk: i for i, pk in enumerate(nodes)}
    omega = [1.0] * len(nodes)
    basis = 0
    for block, qc in finalized_chain:
        if qc is None or block.height == 0:
            continue
        if qc.block_hash != block.digest:
            raise ValueError("QC does not certify the paired block")
        i = index.get(block.proposer)
        if i is not None:
            omega[i] = connectivity_score(qc, proposer=block.proposer)
        basis = max(basis, block.epoch)
    return WeightTable(basis, tuple(nodes), tuple(omega), omega_min, alpha)


def election_keys(epoch: int, table: WeightTable) -> Dict[bytes, float]:
    a = table.alpha
    return {
        pk: hash_nor_neglog(epoch, pk) / (w ** a)
        for pk, w in zip(table.nodes, table.weights)
    }


def elect_leader(epoch: int, table: WeightTable, nodes: Optional[Sequence[bytes]] = None) -> bytes:
    """Deterministic weighted unique winner; ties go to the smaller pk."""
    nodes = table.nodes if nodes is None else tuple(nodes)
    if not nodes:
        raise ValueError("empty node list")
    if nodes != table.nodes:
        w = dict(zip(table.nodes, table.weights))
        weights = [w[pk] for pk in nodes]
    else:
        weights = table.weights
    best = None
    best_key = None
    for pk, wi in zip(nodes, weights):
        rho = hash_nor_neglog(epoch, pk) / (wi ** table.alpha)
        if best is None or rho < best_key or (rho == best_key and pk < best):
            best, best_key = pk, rho
    return best


def elect_uniform(epoch: int, nodes: Sequence[bytes]) -> bytes:
    """Random-election baseline: CALE with every weight equal to one."""
    return elect_leader(epoch, WeightTable.uniform(nodes))


def honest_leader_probability(table: WeightTable, honest: Iterable[bytes]) -> float:
    honest = set(honest)
    a = table.alpha
    powered = [w ** a for w in table.weights]
    total = sum(powered)
    return sum(p for pk, p in zip(table.nodes, powered) if pk in honest) / total
