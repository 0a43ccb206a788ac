"""Scenario configuration: a YAML (or JSON) tree with strict keys and materialised defaults.

Units: durations in ms except ``per_block_overhead`` (s); sizes in bytes;
bandwidth in Mbit/s.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml

EXPERIMENTS = ("E1", "E2", "E3", "E4", "E5", "E6")
CHANNEL_KINDS = ("homogeneous", "two-class", "wired")


class ConfigError(ValueError):
    pass


@dataclass
class ChannelSpec:
    kind: str = "homogeneous"
    p_h: float = 0.95
    beta: List[float] = field(default_factory=lambda: [0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    p_fade: float = 0.4
    p_good: float = 0.8


@dataclass
class ElectionSpec:
    policies: List[str] = field(default_factory=lambda: ["cale"])
    alpha: float = 1.0
    omega_min: float = 0.01
    allow_oracle: bool = False


@dataclass
class CodingSpec:
    b_sym: int = 200_000
    epsilon: float = 0.1
    m: int = 10
    s: int = 10
    f_s: int = 3


@dataclass
class RetrievalSpec:
    per: List[float] = field(default_factory=lambda: [0.0, 0.1, 0.2, 0.3, 0.4])
    r: int = 2
    c: int = 4
    t_max: float = 6000.0
    bandwidth: float = 10.0
    per_request_overhead: float = 10.0
    trials: int = 500


@dataclass
class SizeSpec:
    header: int = 20_000
    vote: int = 1_000
    payload: int = 1_200_000


@dataclass
class StorageSpec:
    heights: List[int] = field(default_factory=lambda: [0, 25, 50, 75, 100, 125, 150])
    node_counts: List[int] = field(default_factory=lambda: [20, 200])
    per_block_overhead: float = 0.005


@dataclass
class AnalysisSpec:
    q: List[float] = field(default_factory=lambda: [0.3, 0.5, 0.8, 0.9, 0.95, 1.0])
    p_h: List[float] = field(default_factory=lambda: [0.8, 0.9, 0.95])
    k_tx: List[int] = field(default_factory=lambda: [1, 2, 3])
    pi: float = 0.7
    k_range: List[int] = field(default_factory=lambda: [1, 8])


@dataclass
class ScenarioConfig:
    experiment: str = "E1"
    n: int = 10
    f: Optional[int] = None
    t_slot: float = 10.0
    t_guard: float = 5.0
    k_tx: int = 2
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    election: ElectionSpec = field(default_factory=ElectionSpec)
    coding: CodingSpec = field(default_factory=CodingSpec)
    retrieval: RetrievalSpec = field(default_factory=RetrievalSpec)
    sizes: SizeSpec = field(default_factory=SizeSpec)
    storage: StorageSpec = field(default_factory=StorageSpec)
    analysis: AnalysisSpec = field(default_factory=AnalysisSpec)
    engine: str = "model"
    epochs: int = 20_000
    runs: int = 20
    seed: int = 1

    def __post_init__(self):
        if self.f is None:
            self.f = (self.n - 1) // 3
        validate(self)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def _check_prob(name: str, p: float, lo_open: bool = False) -> None:
    if not (0.0 < p <= 1.0 if lo_open else 0.0 <= p <= 1.0):
        raise ConfigError(f"{name}={p} is not a valid probability")


def validate(cfg: ScenarioConfig) -> None:
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment id {cfg.experiment!r}; expected one of {EXPERIMENTS}")
    if cfg.n < 1 or cfg.f < 0 or cfg.n < 3 * cfg.f + 1:
        raise ConfigError(f"n={cfg.n}, f={cfg.f} violates n >= 3f+1")
    if cfg.k_tx < 1:
        raise ConfigError("k_tx must be at least 1")
    if cfg.runs < 1:
        raise ConfigError("runs must be at least 1")
    if cfg.epochs < 1:
        raise ConfigError("epochs must be at least 1")
    if cfg.engine not in ("model", "protocol"):
        raise ConfigError(f"engine must be 'model' or 'protocol', got {cfg.engine!r}")
    ch = cfg.channel
    if ch.kind not in CHANNEL_KINDS:
        raise ConfigError(f"channel.kind must be one of {CHANNEL_KINDS}")
    _check_prob("channel.p_h", ch.p_h, lo_open=True)
    _check_prob("channel.p_fade", ch.p_fade, lo_open=True)
    _check_prob("channel.p_good", ch.p_good, lo_open=True)
    for b in ch.beta:
        _check_prob("channel.beta", b)
    el = cfg.election
    for p in el.policies:
        if p not in ("cale", "random", "oracle"):
            raise ConfigError(f"unknown election policy {p!r}")
    if "oracle" in el.policies and not el.allow_oracle:
        raise ConfigError("oracle policy reads the full link matrix; set election.allow_oracle: true "
                          "(or pass --allow-oracle) to acknowledge it is a baseline only")
    if el.alpha <= 0 or el.omega_min <= 0:
        raise ConfigError("election.alpha and election.omega_min must be positive")
    for p in cfg.retrieval.per:
        if not 0.0 <= p < 1.0:
            raise ConfigError(f"retrieval.per={p} must lie in [0, 1)")
    rt = cfg.retrieval
    if rt.r < 1 or rt.c < 1 or rt.trials < 1 or rt.t_max <= 0 or rt.bandwidth <= 0:
        raise ConfigError("retrieval r, c, trials, t_max and bandwidth must be positive")
    an = cfg.analysis
    for q in an.q:
        if not 0.0 < q <= 1.0:
            raise ConfigError(f"analysis.q={q} must lie in (0, 1]")
    if len(an.k_range) != 2 or an.k_range[0] < 1 or an.k_range[1] < an.k_range[0]:
        raise ConfigError("analysis.k_range must be [lo, hi] with 1 <= lo <= hi")


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        where = f" under {path}" if path else ""
        raise ConfigError(f"unknown config key(s){where}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        sub = _NESTED.get(name) if cls is ScenarioConfig else None
        if sub is not None:
            kwargs[name] = _build(sub, value, name)
        else:
            kwargs[name] = value
    return kwargs if cls is ScenarioConfig else cls(**kwargs)


_NESTED = {
    "channel": ChannelSpec,
    "election": ElectionSpec,
    "coding": CodingSpec,
    "retrieval": RetrievalSpec,
    "sizes": SizeSpec,
    "storage": StorageSpec,
    "analysis": AnalysisSpec,
}


def from_dict(data: Dict[str, Any], **overrides) -> ScenarioConfig:
    kwargs = _build(ScenarioConfig, dict(data or {}), "")
    for k, v in overrides.items():
        if v is not None:
            kwargs[k] = v
    try:
        return ScenarioConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: Union[str, Path], **overrides) -> ScenarioConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {p}: {exc}") from None
    return from_dict(data, **overrides)
