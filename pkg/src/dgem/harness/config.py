"""Pipeline configuration: typed sections, range checks, unknown keys rejected."""
from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from dgem.embedder import EmbedConfig, TrainMode
from dgem.graph import MODES
from dgem.ranker import Pooling, RankerConfig
from dgem.walker import BiasMode, StaticWalkConfig


class ConfigError(ValueError):
    pass


@dataclass
class GraphSection:
    mode: str = "static"


@dataclass
class WalkSection:
    length: int = 12
    per_vertex: int = 20
    alpha: float = 1.0
    start_bias: str = "uniform"
    step_bias: str = "uniform"
    count: int | None = None  # temporal walks; default per_vertex * |V|
    strict: bool = False


@dataclass
class EmbedSection:
    dim: int = 180
    window: int = 20
    negatives: int = 5
    epochs: int = 5
    lr0: float = 0.025
    mode: str = "sg"
    fast: bool = False


@dataclass
class RankSection:
    pooling: str = "attention"
    hidden: list = field(default_factory=lambda: [64, 32])
    attention_hidden: int = 36
    dropout: float = 0.5
    max_history: int = 20
    lr: float = 0.003
    epochs: int = 10
    batch_size: int = 256


@dataclass
class EvalSection:
    neg_ratio: int = 1
    split_fraction: float = 0.8
    holdout_fraction: float = 1 / 3
    baseline_auc: float | None = None
    baseline_gauc: float | None = None


@dataclass
class SynthSection:
    n_users: int = 1000
    n_items: int = 200
    n_clusters: int = 10
    events_per_user: int = 20
    noise: float = 0.1
    n_solitary: int = 10


@dataclass
class DataSection:
    source: str = "synth"
    min_activity: int = 5
    format: str | None = None
    synth: SynthSection = field(default_factory=SynthSection)


@dataclass
class IOSection:
    events: str | None = None
    metadata: str | None = None
    out_dir: str | None = None


@dataclass
class PipelineConfig:
    graph: GraphSection = field(default_factory=GraphSection)
    walk: WalkSection = field(default_factory=WalkSection)
    embed: EmbedSection = field(default_factory=EmbedSection)
    rank: RankSection = field(default_factory=RankSection)
    eval: EvalSection = field(default_factory=EvalSection)
    data: DataSection = field(default_factory=DataSection)
    io: IOSection = field(default_factory=IOSection)
    seed: int = 0
    runs: int = 5

    # Typed views for the library layers.

    def walk_config(self) -> StaticWalkConfig:
        return StaticWalkConfig(self.walk.length, self.walk.per_vertex, self.walk.alpha,
                                derive_seed(self.seed, "walk"))

    def embed_config(self) -> EmbedConfig:
        e = self.embed
        return EmbedConfig(e.dim, e.window, e.negatives, e.epochs, e.lr0, TrainMode(e.mode),
                           derive_seed(self.seed, "embed"), e.fast)

    def ranker_config(self) -> RankerConfig:
        r = self.rank
        return RankerConfig(Pooling(r.pooling), tuple(r.hidden), r.attention_hidden, r.dropout,
                            r.max_history, r.lr, r.epochs, r.batch_size,
                            derive_seed(self.seed, "rank"))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **dotted) -> "PipelineConfig":
        """Copy with ``section__key=value`` overrides, revalidated."""
        d = self.to_dict()
        for key, value in dotted.items():
            node = d
            *path, last = key.split("__")
            for p in path:
                node = node[p]
            node[last] = value
        return from_dict(d)


_TAGS = {"walk": 1, "embed": 2, "rank": 3, "samples": 4, "synth": 5, "run": 6}


def derive_seed(seed: int, tag: str, *extra: int) -> int:
    """Independent 63-bit seed for one pipeline stage."""
    ss = np.random.SeedSequence([int(seed) & (2**63 - 1), _TAGS[tag], *extra])
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def _build(cls, data: Any, where: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown keys {unknown}")
    kwargs = {}
    for name, value in data.items():
        f = names[name]
        sub = f.default_factory if f.default_factory is not dataclasses.MISSING else None
        if dataclasses.is_dataclass(sub):
            kwargs[name] = _build(sub, value, f"{where}.{name}".lstrip("."))
        else:
            kwargs[name] = value
    return cls(**kwargs)


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _is_int(x) -> bool:
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


def _is_num(x) -> bool:
    return isinstance(x, (int, float, np.number)) and not isinstance(x, bool)


def validate(c: PipelineConfig) -> PipelineConfig:
    _check(c.graph.mode in MODES, f"graph.mode must be one of {MODES}")
    w = c.walk
    _check(_is_int(w.length) and w.length >= 2, "walk.length must be an integer >= 2")
    _check(_is_int(w.per_vertex) and w.per_vertex >= 1, "walk.per_vertex must be an integer >= 1")
    _check(_is_num(w.alpha) and 0 <= w.alpha <= 1, "walk.alpha must lie in [0, 1]")
    for name in ("start_bias", "step_bias"):
        _check(getattr(w, name) in {b.value for b in BiasMode},
               f"walk.{name} must be one of {[b.value for b in BiasMode]}")
    _check(w.count is None or (_is_int(w.count) and w.count >= 1), "walk.count must be >= 1")
    _check(isinstance(w.strict, bool), "walk.strict must be a boolean")
    e = c.embed
    for name in ("dim", "window", "negatives", "epochs"):
        _check(_is_int(getattr(e, name)) and getattr(e, name) >= 1, f"embed.{name} must be an integer >= 1")
    _check(_is_num(e.lr0) and e.lr0 > 0, "embed.lr0 must be positive")
    _check(e.mode in {m.value for m in TrainMode}, "embed.mode must be 'sg' or 'cbow'")
    r = c.rank
    _check(r.pooling in {p.value for p in Pooling}, "rank.pooling must be 'average' or 'attention'")
    _check(isinstance(r.hidden, (list, tuple)) and len(r.hidden) > 0
           and all(_is_int(h) and h >= 1 for h in r.hidden), "rank.hidden must be a non-empty list of positive integers")
    _check(_is_num(r.dropout) and 0 <= r.dropout < 1, "rank.dropout must lie in [0, 1)")
    for name in ("attention_hidden", "max_history", "epochs", "batch_size"):
        _check(_is_int(getattr(r, name)) and getattr(r, name) >= 1, f"rank.{name} must be an integer >= 1")
    _check(_is_num(r.lr) and r.lr > 0, "rank.lr must be positive")
    v = c.eval
    _check(_is_int(v.neg_ratio) and v.neg_ratio >= 0, "eval.neg_ratio must be an integer >= 0")
    _check(_is_num(v.split_fraction) and 0 < v.split_fraction < 1, "eval.split_fraction must lie in (0, 1)")
    _check(_is_num(v.holdout_fraction) and 0 < v.holdout_fraction < 1, "eval.holdout_fraction must lie in (0, 1)")
    for name in ("baseline_auc", "baseline_gauc"):
        b = getattr(v, name)
        _check(b is None or (_is_num(b) and 0 <= b <= 1 and b != 0.5), f"eval.{name} must be in [0, 1] and not 0.5")
    d = c.data
    _check(d.source in ("synth", "files"), "data.source must be 'synth' or 'files'")
    _check(_is_int(d.min_activity) and d.min_activity >= 0, "data.min_activity must be an integer >= 0")
    _check(d.format in (None, "tsv", "csv", "json"), "data.format must be tsv, csv or json")
    s = d.synth
    for name in ("n_users", "n_items", "n_clusters", "events_per_user"):
        _check(_is_int(getattr(s, name)) and getattr(s, name) >= 1, f"data.synth.{name} must be an integer >= 1")
    _check(s.n_items % s.n_clusters == 0, "data.synth.n_clusters must divide n_items")
    _check(_is_num(s.noise) and 0 <= s.noise < 1, "data.synth.noise must lie in [0, 1)")
    _check(_is_int(s.n_solitary) and s.n_solitary >= 0, "data.synth.n_solitary must be >= 0")
    if d.source == "files":
        _check(bool(c.io.events), "io.events is required when data.source is 'files'")
    _check(_is_int(c.seed) and c.seed >= 0, "seed must be a non-negative integer")
    _check(_is_int(c.runs) and c.runs >= 1, "runs must be an integer >= 1")
    return c


def from_dict(data: dict | None) -> PipelineConfig:
    try:
        cfg = _build(PipelineConfig, copy.deepcopy(data) or {}, "")
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return validate(cfg)


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return from_dict({})
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return from_dict(data)
