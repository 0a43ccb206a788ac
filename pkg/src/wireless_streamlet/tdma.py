"""TDMA epoch clock: one proposal slot, one vote slot per node, fixed K_tx attempts.

There are no acknowledgements, so a node that transmits in a slot always
spends all ``k_tx`` attempts. Every honest node keeps its slot: if it has no
vote to send it broadcasts a signed abstain frame instead, which is why the
per-epoch attempt count is exactly ``(n + 1) * k_tx`` when nobody is silent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence

import numpy as np

from .channel import LinkMatrix, gamma_mean, quantize_array

SILENT_LEADER = "silent-leader"
SILENT_VOTER = "silent-voter"
CSI_MISREPORT = "csi-misreport"
EQUIVOCATE = "equivocating-leader"
FAULT_MODES = (SILENT_LEADER, SILENT_VOTER, CSI_MISREPORT, EQUIVOCATE)


@dataclass(frozen=True)
class EpochSchedule:
    n: int
    t_slot: float = 10.0
    t_guard: float = 5.0
    k_tx: int = 2

    def __post_init__(self):
        if self.n < 1 or self.k_tx < 1:
            raise ValueError("n and k_tx must be positive")
        if self.t_slot < 0 or self.t_guard < 0:
            raise ValueError("durations must be non-negative")


def epoch_duration(sched: EpochSchedule) -> float:
    """Epoch length in ms: ``(n + 1) * t_slot + t_guard``."""
    return (sched.n + 1) * sched.t_slot + sched.t_guard


@dataclass
class FaultPlan:
    """Byzantine behaviour per node index. Nodes not listed are honest."""

    modes: Dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        for i, m in self.modes.items():
            if m not in FAULT_MODES:
                raise ValueError(f"unknown fault mode {m!r} for node {i}")

    def mode(self, i: int) -> Optional[str]:
        return self.modes.get(i)

    def is_faulty(self, i: int) -> bool:
        return i in self.modes

    def honest_nodes(self, n: int) -> List[int]:
        return [i for i in range(n) if i not in self.modes]


NO_FAULTS = FaultPlan()


@dataclass
class EpochTrace:
    epoch: int
    leader: int
    proposal_receivers: FrozenSet[int]
    votes_heard: Dict[int, FrozenSet[int]]
    on_air_attempts: int
    notarized: bool
    wall_time: float
    proposals_sent: int = 0

    def record(self) -> dict:
        """Stable flat record for trace streaming (layout version 1)."""
        return {
            "version": 1,
            "epoch": self.epoch,
            "leader": self.leader,
            "proposal_receivers": sorted(self.proposal_receivers),
            "votes_heard": {str(k): sorted(v) for k, v in sorted(self.votes_heard.items())},
            "on_air_attempts": self.on_air_attempts,
            "notarized": self.notarized,
            "wall_time": self.wall_time,
        }


def vote_slot_order(pks: Sequence[bytes]) -> List[int]:
    """Node indices in vote-slot order: slot i+1 belongs to the i-th smallest pk."""
    return sorted(range(len(pks)), key=lambda i: pks[i])


def _first_success(got: np.ndarray) -> np.ndarray:
    """Index of the first successful attempt per receiver, -1 if none."""
    any_ok = got.any(axis=0)
    first = got.argmax(axis=0)
    return np.where(any_ok, first, -1)


def run_epoch(sched: EpochSchedule, link: LinkMatrix, leader: int, nodes: Sequence,
              fault_plan: Optional[FaultPlan], rng: np.random.Generator,
              epoch: int) -> EpochTrace:
    """Simulate one epoch slot by slot.

    ``nodes`` are runtimes exposing ``pk``, ``build_proposals``,
    ``receive_proposal``, ``make_votes`` and ``receive_frame``; see
    :class:`wireless_streamlet.consensus.NodeRuntime`.
    """
    plan = fault_plan or NO_FAULTS
    n = link.n
    k = sched.k_tx
    attempts = 0

    # slot 0: proposal
    lead_mode = plan.mode(leader)
    if lead_mode == SILENT_LEADER:
        proposals = []
    else:
        proposals = nodes[leader].build_proposals(epoch, equivocate=(lead_mode == EQUIVOCATE))
    receivers = set()
    if proposals:
        attempts += k
        got = rng.random((k, n)) < link.p[leader][None, :]
        first = _first_success(got)
        gammas = rng.exponential(gamma_mean(link, leader), size=n)
        tags = quantize_array(gammas)
        for j in range(n):
            if j == leader:
                for prop in proposals:
                    nodes[j].receive_proposal(prop, epoch, tag=None)
                continue
            a = int(first[j])
            if a < 0:
                continue
            receivers.add(j)
            # attempt a carries header a mod len(proposals)
            nodes[j].receive_proposal(proposals[a % len(proposals)], epoch, tag=int(tags[j]))
            if len(proposals) > 1 and plan.mode(j) == EQUIVOCATE:
                # colluding receivers learn every variant the leader sent
                for extra in proposals:
                    nodes[j].receive_proposal(extra, epoch, tag=int(tags[j]))

    # slots 1..n: votes
    heard: Dict[int, set] = {j: set() for j in range(n)}
    pks = [nd.pk for nd in nodes]
    for i in vote_slot_order(pks):
        mode = plan.mode(i)
        if mode == SILENT_VOTER:
            continue
        frames = nodes[i].make_votes(epoch, misreport=(mode == CSI_MISREPORT),
                                     collude=(mode == EQUIVOCATE))
        if not frames:
            continue
        attempts += k
        got = rng.random((k, n)) < link.p[i][None, :]
        first = _first_success(got)
        for j in range(n):
            if j != i and first[j] < 0:
                continue
            delivered = False
            for fr in frames:
                delivered |= nodes[j].receive_frame(fr)
            if delivered and j != i:
                heard[j].add(i)

    success = nodes[leader].leader_quorum(epoch) if proposals else False
    return EpochTrace(
        epoch=epoch,
        leader=leader,
        proposal_receivers=frozenset(receivers),
        votes_heard={j: frozenset(v) for j, v in heard.items()},
        on_air_attempts=attempts,
        notarized=bool(success),
        wall_time=epoch_duration(sched),
        proposals_sent=len(proposals),
    )
