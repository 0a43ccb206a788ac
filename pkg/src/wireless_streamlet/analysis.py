"""Closed-form liveness analysis: delivery bounds, notarization lower bound,
expected epochs to finality, airtime cost and the K_tx optimizer.

Binomial tails are accumulated in the log domain.
"""

from __future__ import annotations

import math
import warnings
from fractions import Fraction
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import binom

from .channel import within_slot_delivery
from .tdma import EpochSchedule, epoch_duration


@dataclass(frozen=True)
class LivenessParams:
    n: int
    f: int
    p_h: float
    k_tx: int = 2
    pi: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.n < 3 * self.f + 1:
            raise ValueError(f"n={self.n} violates n >= 3f+1 for f={self.f}")
        if not 0.0 < self.p_h <= 1.0:
            raise ValueError("p_h must lie in (0, 1]")
        if not 0.0 <= self.pi <= 1.0:
            raise ValueError("pi must lie in [0, 1]")
        if self.k_tx < 1:
            raise ValueError("k_tx must be at least 1")

    @property
    def h(self) -> int:
        return self.n - self.f

    @property
    def quorum(self) -> int:
        return 2 * self.f + 1


def p_hat(params: LivenessParams) -> float:
    return within_slot_delivery(params.p_h, params.k_tx)


def _log_tail(trials: int, threshold: int, p: float) -> float:
    """log P[Binomial(trials, p) >= threshold]."""
    if threshold > trials:
        return -math.inf
    if threshold <= 0:
        return 0.0
    xs = np.arange(threshold, trials + 1)
    with np.errstate(divide="ignore"):
        return float(logsumexp(binom.logpmf(xs, trials, p)))


def p_prop(params: LivenessParams, phat: Optional[float] = None) -> float:
    """Probability that at least 2f+1 honest nodes decode the proposal."""
    ph = p_hat(params) if phat is None else phat
    if params.quorum > params.h:
        warnings.warn(f"2f+1={params.quorum} exceeds h={params.h}; no quorum is possible")
        return 0.0
    return math.exp(_log_tail(params.h, params.quorum, ph))


def psi(x: int, f: int, phat: float) -> float:
    """P[Binomial(x, phat) >= 2f+1]; zero when x < 2f+1."""
    if x < 0:
        raise ValueError("x must be non-negative")
    return math.exp(_log_tail(x, 2 * f + 1, phat))


def q_lower_bound(params: LivenessParams, phat: Optional[float] = None) -> float:
    """pi * sum_{x=2f+1}^{h} Bin(x; h, phat) * psi(x)."""
    ph = p_hat(params) if phat is None else phat
    h, need = params.h, params.quorum
    if params.pi == 0.0 or need > h:
        return 0.0
    terms = []
    with np.errstate(divide="ignore"):
        for x in range(need, h + 1):
            lp = float(binom.logpmf(x, h, ph)) + _log_tail(x, need, ph)
            terms.append(lp)
    return params.pi * math.exp(float(logsumexp(terms)))


def expected_epochs(q: float) -> float:
    """Expected epochs from S_0 until three consecutive successful epochs."""
    if not q > 0.0:
        raise ValueError("q must be positive for finality to be reachable")
    if q > 1.0:
        raise ValueError("q must not exceed 1")
    if q == 1.0:
        return 3.0
    q3 = q ** 3
    return (1.0 - q3) / (q3 * (1.0 - q))


def expected_epochs_linear(q: float) -> np.ndarray:
    """Solve the absorbing-chain equations directly; returns (E_0, E_1, E_2, E_3).

    E_k = 1 + q E_{k+1} + (1 - q) E_0 for k = 0, 1, 2 and E_3 = 0. The 4x4
    system is eliminated in exact rationals (the float ``q`` is represented
    exactly), so the only rounding is the final conversion.
    """
    if not 0.0 < q <= 1.0:
        raise ValueError("q must lie in (0, 1]")
    fq = Fraction(q)
    a = [[Fraction(0)] * 4 + [Fraction(0)] for _ in range(4)]
    for k in range(3):
        a[k][k] += 1
        a[k][k + 1] -= fq
        a[k][0] -= 1 - fq
        a[k][4] = Fraction(1)
    a[3][3] = Fraction(1)
    for col in range(4):
        piv = next(r for r in range(col, 4) if a[r][col] != 0)
        a[col], a[piv] = a[piv], a[col]
        for r in range(4):
            if r != col and a[r][col] != 0:
                c = a[r][col] / a[col][col]
                a[r] = [x - c * y for x, y in zip(a[r], a[col])]
    return np.array([float(a[k][4] / a[k][k]) for k in range(4)])


def simulate_hitting_times(q: float, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Monte-Carlo epochs until three successes in a row, vectorized over trials."""
    out = np.zeros(trials, dtype=np.int64)
    state = np.zeros(trials, dtype=np.int8)
    active = np.arange(trials)
    steps = 0
    while active.size:
        steps += 1
        ok = rng.random(active.size) < q
        st = np.where(ok, state[active] + 1, 0)
        state[active] = st
        done = st == 3
        out[active[done]] = steps
        active = active[~done]
    return out


@dataclass(frozen=True)
class MarkovFinalityModel:
    q: float

    @property
    def expected(self) -> Tuple[float, float, float, float]:
        return tuple(float(x) for x in expected_epochs_linear(self.q))

    @property
    def e0(self) -> float:
        return expected_epochs(self.q)


def expected_finality_time(q: float, sched: EpochSchedule) -> float:
    return epoch_duration(sched) * expected_epochs(q)


def epoch_cost(n: int, k_tx: int) -> int:
    """On-air attempts per epoch: one proposal slot plus n vote slots."""
    if n < 1 or k_tx < 1:
        raise ValueError("n and k_tx must be positive")
    return (n + 1) * k_tx


def cost_per_final_block(p_h: float, pi: float, n: int, f: int, k_tx: int) -> float:
    q = q_lower_bound(LivenessParams(n, f, p_h, k_tx, pi))
    if q <= 0.0:
        return math.inf
    return epoch_cost(n, k_tx) * expected_epochs(q)


def optimize_ktx(p_h: float, pi: float, n: int, f: int, k_range: Iterable[int]
                 ) -> Tuple[int, Dict[int, float]]:
    """Pick K_tx minimising expected on-air attempts per finalized block.

    Returns the best K_tx (smallest on ties) and the full cost curve.
    """
    ks = list(k_range)
    if not ks:
        raise ValueError("empty K_tx range")
    curve = {k: cost_per_final_block(p_h, pi, n, f, k) for k in ks}
    finite = [k for k in ks if math.isfinite(curve[k])]
    if not finite:
        raise ValueError("every candidate K_tx gives q = 0")
    best = min(finite, key=lambda k: (curve[k], k))
    return best, curve


def is_unimodal(curve: Dict[int, float]) -> bool:
    vals = [curve[k] for k in sorted(curve)]
    i = int(np.argmin(vals))
    return all(vals[j] >= vals[j + 1] for j in range(i)) and \
        all(vals[j] <= vals[j + 1] for j in range(i, len(vals) - 1))
