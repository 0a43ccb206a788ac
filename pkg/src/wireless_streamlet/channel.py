"""Packet-erasure channel: per-link delivery, two-class topologies and CSI samples."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

GOOD = "good"
FADING = "deep-fading"

GAMMA_MEAN_GOOD = 15.0
GAMMA_MEAN_FADE = 3.0

# CSI tags are 8-bit codes of log2(1 + gamma) in steps of 1/16.
TAG_STEPS_PER_OCTAVE = 16
TAG_MAX = 255


def quantize(gamma: float) -> int:
    if gamma < 0 or math.isnan(gamma):
        raise ValueError("gamma must be non-negative")
    code = int(round(TAG_STEPS_PER_OCTAVE * math.log2(1.0 + gamma)))
    return min(code, TAG_MAX)


def dequantize(tag: int) -> float:
    if not 0 <= tag <= TAG_MAX:
        raise ValueError(f"tag {tag} outside 0..{TAG_MAX}")
    return 2.0 ** (tag / TAG_STEPS_PER_OCTAVE) - 1.0


def quantize_array(gamma: np.ndarray) -> np.ndarray:
    """Vectorized :func:`quantize` (returns uint8 codes)."""
    codes = np.rint(TAG_STEPS_PER_OCTAVE * np.log2(1.0 + gamma))
    return np.minimum(codes, TAG_MAX).astype(np.uint8)


@dataclass(frozen=True)
class CsiSample:
    gamma: float
    quantized_tag: int

    @classmethod
    def from_gamma(cls, gamma: float) -> "CsiSample":
        return cls(float(gamma), quantize(gamma))


@dataclass
class LinkMatrix:
    """Per-attempt success probabilities ``p[i, j]`` for the directed link i -> j."""

    p: np.ndarray
    classes: List[str] = field(default_factory=list)
    p_floor: Optional[float] = None

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        n = self.p.shape[0]
        if self.p.shape != (n, n):
            raise ValueError("link matrix must be square")
        if not self.classes:
            self.classes = [GOOD] * n
        if len(self.classes) != n:
            raise ValueError("one class label per node required")
        off = self.p[~np.eye(n, dtype=bool)]
        if np.any(off <= 0) or np.any(off > 1):
            raise ValueError("off-diagonal probabilities must lie in (0, 1]")
        if self.p_floor is not None and np.any(off < self.p_floor - 1e-15):
            raise ValueError("link below declared floor")

    @property
    def n(self) -> int:
        return self.p.shape[0]

    def is_fading(self, i: int) -> bool:
        return self.classes[i] == FADING

    def fading_nodes(self) -> List[int]:
        return [i for i, c in enumerate(self.classes) if c == FADING]


def homogeneous_links(n: int, p: float) -> LinkMatrix:
    mat = np.full((n, n), float(p))
    np.fill_diagonal(mat, 1.0)
    return LinkMatrix(mat, [GOOD] * n, p_floor=p)


def make_two_class_topology(n: int, beta: float, p_fade: float, p_good: float,
                            rng: np.random.Generator) -> LinkMatrix:
    """Mark ``round(beta * n)`` uniformly chosen nodes as deep-fading.

    A fading node's outgoing links all use ``p_fade``; everyone else sends
    with ``p_good``.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    for p in (p_fade, p_good):
        if not 0.0 < p <= 1.0:
            raise ValueError("probabilities must lie in (0, 1]")
    count = int(round(beta * n))
    fading = set(rng.choice(n, size=count, replace=False).tolist()) if count else set()
    classes = [FADING if i in fading else GOOD for i in range(n)]
    mat = np.empty((n, n))
    for i in range(n):
        mat[i, :] = p_fade if i in fading else p_good
    np.fill_diagonal(mat, 1.0)
    return LinkMatrix(mat, classes)


def attempt_delivery(link: LinkMatrix, sender: int, receiver: int, rng: np.random.Generator) -> bool:
    """One transmission attempt; consumes exactly one uniform draw."""
    if sender == receiver:
        raise ValueError("sender and receiver must differ")
    if not (0 <= sender < link.n and 0 <= receiver < link.n):
        raise IndexError("node index out of range")
    return bool(rng.random() < link.p[sender, receiver])


def broadcast(link: LinkMatrix, sender: int, k_tx: int, rng: np.random.Generator) -> np.ndarray:
    """Per-attempt reception matrix of shape ``(k_tx, n)`` for one broadcast slot.

    Every attempt is an independent Bernoulli draw per receiver. The sender's
    own column is always true.
    """
    got = rng.random((k_tx, link.n)) < link.p[sender][None, :]
    got[:, sender] = True
    return got


def within_slot_delivery(p: float, k_tx: int) -> float:
    """Probability that at least one of ``k_tx`` attempts gets through."""
    if k_tx < 1:
        raise ValueError("k_tx must be at least 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    return 1.0 - (1.0 - p) ** k_tx


def gamma_mean(link: LinkMatrix, sender: int) -> float:
    return GAMMA_MEAN_FADE if link.is_fading(sender) else GAMMA_MEAN_GOOD


def sample_csi(link: LinkMatrix, sender: int, receiver: int, epoch: int,
               rng: np.random.Generator) -> CsiSample:
    """Receiver-side SNR of the sender's transmission (exponential, class mean)."""
    if sender == receiver:
        raise ValueError("sender and receiver must differ")
    return CsiSample.from_gamma(rng.exponential(gamma_mean(link, sender)))
