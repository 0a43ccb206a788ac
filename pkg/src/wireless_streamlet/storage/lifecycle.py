"""Storage bookkeeping: symbol placement, pruning, per-node footprint, bootstrap time."""

from __future__ import annotations

from typing import List, MutableMapping

from ..chain import ChainState
from .coding import CodingParams

REPLICATION = "replication"
CODED = "coded"
FULL = "full"
STATE_FIRST = "state-first"


def symbol_node(index: int, s: int) -> int:
    """Storage node holding symbol ``index``."""
    return index % s


def descends_from(chain: ChainState, d: bytes, ancestor: bytes) -> bool:
    """True when ``d`` is ``ancestor`` or extends it."""
    stop = chain.blocks[ancestor].height
    while d in chain.blocks and chain.blocks[d].height > stop:
        d = chain.blocks[d].parent
    return d == ancestor


def prune(chain: ChainState, store: MutableMapping[bytes, object]) -> List[bytes]:
    """Drop symbols of blocks that can no longer become final.

    A payload goes when its block is off the finalized path and does not
    extend the finalized tip. Blocks above the tip and payloads of unknown
    blocks are kept. Returns the deleted payload ids.
    """
    final = set(chain.finalized_digests())
    tip = chain.finalized_tip
    dead = {d for d, blk in chain.blocks.items()
            if blk.height > 0 and d not in final and not descends_from(chain, d, tip)}
    doomed = {chain.blocks[d].payload_id for d in dead}
    # a payload shared with a live block stays
    doomed -= {blk.payload_id for d, blk in chain.blocks.items() if d not in dead}
    deleted = []
    for pid in list(store):
        if pid in doomed:
            del store[pid]
            deleted.append(pid)
    return deleted


def per_node_storage(height: int, payload_bytes: float, params: CodingParams, mode: str) -> float:
    """Bytes of payload data each node keeps at a given chain height."""
    if height < 0:
        raise ValueError("height must be non-negative")
    if mode == REPLICATION:
        return height * payload_bytes
    if mode == CODED:
        return height * payload_bytes * (params.m / params.k) / params.s
    raise ValueError(f"unknown storage mode {mode!r}")


def simulate_bootstrap(height: int, header_bytes: float, payload_bytes: float, bandwidth: float,
                       mode: str, per_block_overhead: float = 0.005) -> float:
    """Seconds for a new node to sync ``height`` blocks.

    Full sync downloads headers and payloads; state-first downloads headers
    only and fetches payloads on demand later. Both pay a fixed per-block
    processing overhead (seconds). ``bandwidth`` is in bytes per second.
    """
    if height < 0:
        raise ValueError("height must be non-negative")
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    if mode == FULL:
        per_block = (header_bytes + payload_bytes) / bandwidth
    elif mode == STATE_FIRST:
        per_block = header_bytes / bandwidth
    else:
        raise ValueError(f"unknown bootstrap mode {mode!r}")
    return height * (per_block + per_block_overhead)


def bootstrap_overhead_share(height: int, header_bytes: float, payload_bytes: float,
                             bandwidth: float, per_block_overhead: float = 0.005) -> float:
    """Part of the state-first/full ratio due to the per-block overhead term."""
    full = simulate_bootstrap(height, header_bytes, payload_bytes, bandwidth, FULL, per_block_overhead)
    if full == 0:
        return 0.0
    return height * per_block_overhead / full
