"""Vectorized per-epoch success model for long election-policy sweeps.

Every simulated chain shares one global view: an epoch succeeds when the
leader hears at least 2f+1 votes (its own included) from the nodes that
decoded its proposal within ``k_tx`` attempts, and a successful epoch
notarizes the leader's block on the single notarized chain. The run-of-three
rule finalizes blocks and CALE weights follow the finalized blocks' QC
medians, exactly as in the protocol engine. What the model drops is
per-node view divergence, so it evaluates the success law that the liveness
analysis describes, many chains at once.

Randomness is drawn per run from that run's own generator in fixed-size
chunks, so a run's outcome does not depend on how chains are batched.
Chains that share a run index share the draws (common random numbers).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .cale import ALPHA, OMEGA_MIN
from .channel import GAMMA_MEAN_FADE, GAMMA_MEAN_GOOD, TAG_MAX, TAG_STEPS_PER_OCTAVE, LinkMatrix
from .crypto import encode_u64

import hashlib

CHUNK = 256


def neglog_table(pks: Sequence[bytes], epochs: int) -> np.ndarray:
    """``-ln hash_nor(e, pk)`` for e = 1..epochs, shape (epochs, n)."""
    n = len(pks)
    raw = np.empty((epochs, n), dtype=np.uint64)
    sha = hashlib.sha256
    for e in range(1, epochs + 1):
        enc = encode_u64(e)
        row = raw[e - 1]
        for i, pk in enumerate(pks):
            row[i] = int.from_bytes(sha(enc + pk).digest()[:8], "big")
    # -ln((x+1)/2^64); float64 rounding of x+1 is harmless at this resolution
    u = (raw.astype(np.float64) + 1.0) / 2.0 ** 64
    return -np.log(u)


@dataclass
class ChainSpec:
    """One simulated chain: a link matrix, a policy and the run it draws from."""

    links: LinkMatrix
    policy: str
    run: int
    alpha: float = ALPHA
    omega_min: float = OMEGA_MIN
    forced_leader: Optional[int] = None


@dataclass
class ModelResult:
    flags: np.ndarray          # (chains, epochs) bool, leader-side success
    leaders: np.ndarray        # (chains, epochs) int
    finalized_height: np.ndarray

    @property
    def rates(self) -> np.ndarray:
        return self.flags.mean(axis=1)


def _oracle_best(link: LinkMatrix) -> np.ndarray:
    p = link.p.copy()
    np.fill_diagonal(p, np.inf)
    worst = p.min(axis=1)
    return worst == worst.max()


def simulate_epoch_model(chains: Sequence[ChainSpec], epochs: int, f: int, k_tx: int,
                         run_rngs: Sequence[np.random.Generator],
                         run_pks: Sequence[Sequence[bytes]]) -> ModelResult:
    """Run every chain for ``epochs`` epochs, batched across chains."""
    B = len(chains)
    n = chains[0].links.n
    if any(c.links.n != n for c in chains):
        raise ValueError("all chains must have the same node count")
    if n < 3 * f + 1:
        raise ValueError("n >= 3f+1 required")
    need = 2 * f + 1
    runs = sorted({c.run for c in chains})
    run_pos = {r: i for i, r in enumerate(runs)}
    crow = np.array([run_pos[c.run] for c in chains])

    phat = np.stack([1.0 - (1.0 - c.links.p.copy()) ** k_tx for c in chains])  # (B, n, n)
    idx = np.arange(n)
    phat[:, idx, idx] = 1.0
    gmean = np.array([[GAMMA_MEAN_FADE if c.links.is_fading(i) else GAMMA_MEAN_GOOD
                       for i in range(n)] for c in chains])
    alpha = np.array([c.alpha for c in chains])[:, None]
    omin = np.array([c.omega_min for c in chains])[:, None]
    pol = np.array([c.policy for c in chains])
    is_cale = pol == "cale"
    is_oracle = pol == "oracle"
    is_forced = pol == "forced"
    oracle_mask = np.stack([_oracle_best(c.links) for c in chains])
    forced = np.array([c.forced_leader if c.forced_leader is not None else 0 for c in chains])

    # slot order and election keys per run
    order = np.stack([np.argsort(np.array([bytes(pk) for pk in run_pks[r]], dtype=object))
                      .astype(int) for r in runs])[crow]                    # (B, n)
    neglog = np.stack([neglog_table(run_pks[r], epochs) for r in runs])     # (R, T, n)

    omega = np.ones((B, n))
    pend = np.full((B, n), np.nan)
    last_p = np.full(B, -1)
    last_s = np.zeros(B)
    e1 = np.full(B, -10)
    e2 = np.full(B, -10)
    e3 = np.full(B, -10)
    fin_h = np.zeros(B, dtype=int)
    height = np.zeros(B, dtype=int)
    h2 = np.zeros(B, dtype=int)
    h3 = np.zeros(B, dtype=int)

    flags = np.zeros((B, epochs), dtype=bool)
    leaders = np.zeros((B, epochs), dtype=np.int32)
    rows = np.arange(B)

    for start in range(0, epochs, CHUNK):
        m = min(CHUNK, epochs - start)
        # per-run draws, then fan out to chains
        u_prop = np.stack([run_rngs[r].random((m, n)) for r in runs])[crow]
        u_vote = np.stack([run_rngs[r].random((m, n)) for r in runs])[crow]
        expo = np.stack([run_rngs[r].standard_exponential((m, n)) for r in runs])[crow]
        for t in range(m):
            ep = start + t + 1
            keys = neglog[crow, ep - 1]                                     # (B, n)
            base = omega.mean(axis=1, keepdims=True)
            w = np.maximum(omega, omin) / base
            cale_key = keys / w ** alpha
            key = np.where(is_cale[:, None], cale_key, keys)
            key = np.where(is_oracle[:, None] & ~oracle_mask, np.inf, key)
            lead = key.argmin(axis=1)
            lead = np.where(is_forced, forced, lead)
            leaders[:, ep - 1] = lead

            p_from_leader = phat[rows, lead]                                # (B, n)
            got = u_prop[:, t] < p_from_leader
            got[rows, lead] = True
            p_to_leader = phat[rows, :, lead]                               # (B, n)
            heard = got & (u_vote[:, t] < p_to_leader)
            heard[rows, lead] = True
            ok = heard.sum(axis=1) >= need
            flags[:, ep - 1] = ok
            if not ok.any():
                continue

            # QC = first 2f+1 votes the leader heard in slot order
            hs = np.take_along_axis(heard, order, axis=1)
            in_qc = hs & (np.cumsum(hs, axis=1) <= need)
            lead_pos = (order == lead[:, None])
            gam = expo[:, t] * np.take_along_axis(gmean, lead[:, None], axis=1)
            tag = np.minimum(np.rint(TAG_STEPS_PER_OCTAVE * np.log2(1.0 + gam)), TAG_MAX)
            val = np.take_along_axis(tag / TAG_STEPS_PER_OCTAVE, order, axis=1)
            sel = in_qc & ~lead_pos
            cnt = sel.sum(axis=1)
            vals = np.where(sel, val, np.inf)
            vals.sort(axis=1)
            med = vals[rows, np.maximum(cnt - 1, 0) // 2]

            # chain bookkeeping for successful chains
            s = np.nonzero(ok)[0]
            prev = last_p[s]
            has_prev = prev >= 0
            pend[s[has_prev], prev[has_prev]] = last_s[s[has_prev]]
            last_p[s] = lead[s]
            last_s[s] = med[s]
            e1[s], e2[s], e3[s] = e2[s], e3[s], ep
            height[s] += 1
            h2[s], h3[s] = h3[s], height[s]
            fin = s[(e2[s] == e3[s] - 1) & (e1[s] == e2[s] - 1)]
            if fin.size:
                pm = ~np.isnan(pend[fin])
                sub = omega[fin]
                sub[pm] = pend[fin][pm]
                omega[fin] = sub
                pend[fin] = np.nan
                fin_h[fin] = h2[fin]
    return ModelResult(flags, leaders, fin_h)
