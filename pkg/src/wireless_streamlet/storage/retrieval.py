"""Retrieval over a lossy storage link, coded versus plain replication.

Timing model: ``c`` request lanes share one link of ``bandwidth`` bytes/s.
A lane that starts a request waits ``per_request_overhead`` (lanes overlap
this wait) and then its object of ``b_obj`` bytes queues FIFO for the link.
Each transfer is erased with probability ``per`` and costs its full airtime
either way. Every symbol gets at most ``r`` attempts.

Coded mode fetches distinct encoded symbols until ``k_req`` arrive intact;
replication needs every one of the ``k`` source fragments. A retrieval that
fails (budgets exhausted or past ``t_max``) is charged ``t_max``.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .coding import CodingParams, rank_of

CODED = "coded"
REPLICATION = "replication"


@dataclass(frozen=True)
class RetrievalConfig:
    per_symbol_per: float = 0.0
    r: int = 2
    c: int = 4
    t_max: float = 6000.0              # ms
    bandwidth: float = 10e6 / 8        # bytes per second
    per_request_overhead: float = 10.0  # ms
    b_proof: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.per_symbol_per < 1.0:
            raise ValueError("PER must lie in [0, 1)")
        if self.r < 1 or self.c < 1:
            raise ValueError("r and c must be positive")
        if self.t_max <= 0 or self.bandwidth <= 0 or self.per_request_overhead < 0:
            raise ValueError("timing parameters must be positive")

    def proof_bytes(self, m: int) -> int:
        if self.b_proof is not None:
            return self.b_proof
        return 32 * math.ceil(math.log2(m)) if m > 1 else 0

    def object_bytes(self, params: CodingParams) -> int:
        return params.b_sym + self.proof_bytes(params.m)

    def transfer_ms(self, params: CodingParams) -> float:
        return 1000.0 * self.object_bytes(params) / self.bandwidth


@dataclass
class RetrievalOutcome:
    success: bool
    latency: float
    symbols_fetched: int
    attempts: int


def simulate_retrieval(params: CodingParams, retrieval: RetrievalConfig, mode: str,
                       rng: np.random.Generator, payload_id: Optional[bytes] = None
                       ) -> RetrievalOutcome:
    """One retrieval. With ``payload_id`` set, coded success also checks that
    the collected coefficient rows reach rank k."""
    if mode not in (CODED, REPLICATION):
        raise ValueError(f"unknown retrieval mode {mode!r}")
    coded = mode == CODED
    need = params.k_req if coded else params.k
    pool = params.m if coded else params.k
    tx = retrieval.transfer_ms(params)
    ovh = retrieval.per_request_overhead
    per = retrieval.per_symbol_per

    queue = deque(range(pool))
    left = {i: retrieval.r for i in range(pool)}
    events: List[Tuple[float, int, int, bool]] = []
    free_lanes = retrieval.c
    link_free = 0.0
    got: List[int] = []
    inflight = 0
    attempts = 0
    seq = 0
    now = 0.0
    failed = False

    def dispatch(t):
        nonlocal free_lanes, link_free, inflight, attempts, seq
        while free_lanes and queue and len(got) + inflight < need:
            sym = queue.popleft()
            start = max(t + ovh, link_free)
            end = start + tx
            link_free = end
            ok = bool(rng.random() >= per)
            heapq.heappush(events, (end, seq, sym, ok))
            seq += 1
            free_lanes -= 1
            inflight += 1
            attempts += 1

    dispatch(0.0)
    while events:
        now, _, sym, ok = heapq.heappop(events)
        free_lanes += 1
        inflight -= 1
        if now > retrieval.t_max:
            failed = True
            break
        if ok:
            got.append(sym)
            if len(got) >= need:
                break
        else:
            left[sym] -= 1
            if left[sym] > 0:
                if coded:
                    queue.append(sym)
                else:
                    queue.appendleft(sym)
            elif not coded:
                failed = True
                break
        dispatch(now)

    success = not failed and len(got) >= need
    if success and coded and payload_id is not None:
        success = rank_of(got, payload_id, params.k) >= params.k
    latency = now if success else retrieval.t_max
    return RetrievalOutcome(success, latency, len(got), attempts)


def retrieval_batch(params: CodingParams, retrieval: RetrievalConfig, mode: str, trials: int,
                    rng: np.random.Generator, payload_id: Optional[bytes] = None):
    """Run ``trials`` retrievals; returns (success rate, mean latency, outcomes)."""
    outs = [simulate_retrieval(params, retrieval, mode, rng, payload_id) for _ in range(trials)]
    rate = sum(o.success for o in outs) / trials
    lat = float(np.mean([o.latency for o in outs]))
    return rate, lat, outs
