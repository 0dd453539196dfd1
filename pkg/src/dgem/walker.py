"""Random walks over item graphs.

Static graphs use the weighted walk with a stay parameter ``alpha``: from
vertex v the walk moves to out-neighbour j with probability
``alpha * wf(v, j) / W(v)`` and stays with the remaining ``1 - alpha``.
Sinks absorb, which ends the walk.

Dynamic graphs use time-respecting walks over edge instances: each step must
leave the current vertex at a time no earlier than the edge just taken.
Start edges and steps are drawn uniformly, exponentially biased toward later
times, or linearly biased by ascending time rank.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import IO, Iterable, NamedTuple, Sequence

import numpy as np

from dgem.graph import DYNAMIC, STATIC, ItemGraph, total_out_weight


class BiasMode(str, enum.Enum):
    UNIFORM = "uniform"
    EXPONENTIAL = "exponential"
    LINEAR = "linear"


@dataclass(frozen=True)
class StaticWalkConfig:
    walk_length: int = 12
    walks_per_vertex: int = 20
    alpha: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.walk_length < 2:
            raise ValueError("walk_length must be >= 2")
        if self.walks_per_vertex < 1:
            raise ValueError("walks_per_vertex must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")


class TemporalEdgeInstance(NamedTuple):
    src: int
    dst: int
    t: float


#: returned by :func:`temporal_next` when no time-respecting continuation exists
TERMINAL = None


@dataclass(frozen=True)
class Walk:
    vertices: tuple[int, ...]
    times: tuple | None = None

    def __len__(self) -> int:
        return len(self.vertices)


class WalkList(list):
    """List of walks that also remembers how many were discarded as too short."""

    def __init__(self, walks: Iterable[Walk] = (), discarded: int = 0):
        super().__init__(walks)
        self.discarded = discarded


class AliasTable:
    """Vose alias method: O(n) build, O(1) draws."""

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or len(w) == 0:
            raise ValueError("weights must be a non-empty vector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        total = w.sum()
        if total <= 0:
            raise ValueError("weights sum to zero")
        n = len(w)
        scaled = w * (n / total)
        prob = np.ones(n)
        alias = np.arange(n)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s, g = small.pop(), large.pop()
            prob[s] = scaled[s]
            alias[s] = g
            scaled[g] = scaled[g] + scaled[s] - 1.0
            (small if scaled[g] < 1.0 else large).append(g)
        # leftovers are 1 up to rounding
        for i in small + large:
            prob[i] = 1.0
        self.prob = prob
        self.alias = alias
        self.probabilities = w / total

    def __len__(self) -> int:
        return len(self.prob)

    def sample(self, rng: np.random.Generator) -> int:
        i = int(rng.integers(len(self.prob)))
        return i if rng.random() < self.prob[i] else int(self.alias[i])

    def sample_many(self, rng: np.random.Generator, size) -> np.ndarray:
        i = rng.integers(len(self.prob), size=size)
        keep = rng.random(size) < self.prob[i]
        return np.where(keep, i, self.alias[i])


def _stream(seed: int, *path: int) -> np.random.Generator:
    # independent counter-derived streams, one per (purpose, pass, walk)
    return np.random.default_rng([int(seed) & (2**63 - 1), *path])


# Static walks


def transition_distribution(g: ItemGraph, v: int, alpha: float = 1.0) -> dict[int, float]:
    total = total_out_weight(g, v)
    if total == 0:
        return {v: 1.0}
    dist = {v: 1.0 - alpha}
    for e in g.adj[v]:
        dist[e.dst] = dist.get(e.dst, 0.0) + alpha * e.wf / total
    return {k: p for k, p in dist.items() if p > 0.0}


class TransitionSampler:
    """Per-vertex alias tables over :func:`transition_distribution` for one alpha."""

    def __init__(self, g: ItemGraph, alpha: float):
        self.support: list[np.ndarray] = []
        self.tables: list[AliasTable | None] = []
        for v in range(g.n):
            dist = transition_distribution(g, v, alpha)
            if dist == {v: 1.0}:
                self.support.append(np.array([v]))
                self.tables.append(None)
            else:
                keys = sorted(dist)
                self.support.append(np.array(keys))
                self.tables.append(AliasTable([dist[k] for k in keys]))

    def absorbing(self, v: int) -> bool:
        return self.tables[v] is None

    def step(self, v: int, rng: np.random.Generator) -> int:
        table = self.tables[v]
        if table is None:
            return v
        return int(self.support[v][table.sample(rng)])

    def sample_many(self, v: int, rng: np.random.Generator, size: int) -> np.ndarray:
        table = self.tables[v]
        if table is None:
            return np.full(size, v)
        return self.support[v][table.sample_many(rng, size)]


def _sink(g: ItemGraph, v: int) -> bool:
    return len(g.adj[v]) == 0


def static_walks(g: ItemGraph, cfg: StaticWalkConfig = StaticWalkConfig()) -> WalkList:
    """``walks_per_vertex`` passes over a fresh random vertex order each.

    A walk stops at ``walk_length`` vertices or when it reaches a sink.
    Walks shorter than two vertices are dropped and counted in
    ``WalkList.discarded``.
    """
    if g.mode != STATIC:
        g = g.as_static()
    kernel = TransitionSampler(g, cfg.alpha)
    out = WalkList()
    for p in range(cfg.walks_per_vertex):
        order = _stream(cfg.seed, 0, p).permutation(g.n)
        for pos, start in enumerate(order):
            rng = _stream(cfg.seed, 1, p, pos)
            walk = [int(start)]
            while len(walk) < cfg.walk_length:
                cur = walk[-1]
                if _sink(g, cur):
                    break
                walk.append(kernel.step(cur, rng))
            if len(walk) < 2:
                out.discarded += 1
            else:
                out.append(Walk(tuple(walk)))
    return out


# Temporal walks


def _bias_weights(times: np.ndarray, mode: BiasMode) -> np.ndarray:
    """Unnormalised selection weights for instances with the given times.

    ``times`` must be sorted ascending; linear weights are the ascending rank.
    """
    mode = BiasMode(mode)
    m = len(times)
    if mode is BiasMode.UNIFORM:
        return np.ones(m)
    if mode is BiasMode.LINEAR:
        return np.arange(1, m + 1, dtype=np.float64)
    # exp(t - c) normalises identically for any shift c; the max keeps it finite
    return np.exp(times - times.max())


def _normalise(w: np.ndarray) -> np.ndarray:
    return w / w.sum()


def start_edge_distribution(
    g: ItemGraph, mode: BiasMode = BiasMode.UNIFORM
) -> tuple[list[TemporalEdgeInstance], np.ndarray]:
    _require_dynamic(g)
    src, dst, t = g.instances
    if len(t) == 0:
        raise ValueError("graph has no temporal edge instances")
    insts = [TemporalEdgeInstance(int(s), int(d), _num(x)) for s, d, x in zip(src, dst, t)]
    return insts, _normalise(_bias_weights(t, mode))


def _num(x: float):
    return int(x) if float(x).is_integer() else float(x)


def _candidates(g: ItemGraph, cur: TemporalEdgeInstance, strict: bool):
    times, dsts = g.temporal_out[cur.dst]
    side = "right" if strict else "left"
    lo = int(np.searchsorted(times, cur.t, side=side))
    return times[lo:], dsts[lo:]


def next_edge_distribution(
    g: ItemGraph,
    cur: TemporalEdgeInstance,
    mode: BiasMode = BiasMode.UNIFORM,
    strict: bool = False,
) -> tuple[list[TemporalEdgeInstance], np.ndarray]:
    """Time-respecting continuations of ``cur`` and their probabilities.

    Empty lists mean the walk terminates.
    """
    _require_dynamic(g)
    times, dsts = _candidates(g, cur, strict)
    if len(times) == 0:
        return [], np.empty(0)
    insts = [TemporalEdgeInstance(cur.dst, int(d), _num(t)) for t, d in zip(times, dsts)]
    return insts, _normalise(_bias_weights(times, mode))


def sample_start_edge(
    g: ItemGraph, mode: BiasMode, rng: np.random.Generator
) -> TemporalEdgeInstance:
    insts, p = start_edge_distribution(g, mode)
    return insts[int(rng.choice(len(insts), p=p))]


def temporal_next(
    g: ItemGraph,
    cur: TemporalEdgeInstance,
    mode: BiasMode,
    rng: np.random.Generator,
    strict: bool = False,
) -> TemporalEdgeInstance | None:
    _require_dynamic(g)
    times, dsts = _candidates(g, cur, strict)
    if len(times) == 0:
        return TERMINAL
    p = _normalise(_bias_weights(times, mode))
    j = int(rng.choice(len(times), p=p))
    return TemporalEdgeInstance(cur.dst, int(dsts[j]), _num(times[j]))


def _require_dynamic(g: ItemGraph) -> None:
    if g.mode != DYNAMIC:
        raise ValueError("temporal walks need a dynamic graph")


def temporal_walks(
    g: ItemGraph,
    count: int,
    max_length: int = 12,
    start_mode: BiasMode = BiasMode.UNIFORM,
    step_mode: BiasMode = BiasMode.UNIFORM,
    seed: int = 0,
    strict: bool = False,
) -> WalkList:
    """Draw ``count`` temporal walks; each carries the times of the edges it used."""
    if count < 1 or max_length < 2:
        raise ValueError("count must be >= 1 and max_length >= 2")
    insts, p_start = start_edge_distribution(g, start_mode)
    start_table = AliasTable(p_start)
    out = WalkList()
    for k in range(count):
        rng = _stream(seed, 2, k)
        cur = insts[start_table.sample(rng)]
        verts, times = [cur.src, cur.dst], [cur.t]
        while len(verts) < max_length:
            nxt = temporal_next(g, cur, step_mode, rng, strict)
            if nxt is TERMINAL:
                break
            verts.append(nxt.dst)
            times.append(nxt.t)
            cur = nxt
        out.append(Walk(tuple(verts), tuple(times)))
    return out


def enumerate_temporal_walks(
    g: ItemGraph,
    max_length: int,
    start_mode: BiasMode = BiasMode.UNIFORM,
    step_mode: BiasMode = BiasMode.UNIFORM,
    strict: bool = False,
) -> dict[tuple, float]:
    """Exact law of :func:`temporal_walks` by exhaustive expansion.

    Keys are ``(vertices, times)`` tuples. Exponential in walk length; meant
    for small graphs.
    """
    law: dict[tuple, float] = {}
    insts, p_start = start_edge_distribution(g, start_mode)

    def expand(path: list[TemporalEdgeInstance], prob: float) -> None:
        if len(path) + 1 < max_length:
            nxt, p = next_edge_distribution(g, path[-1], step_mode, strict)
            if nxt:
                for e, q in zip(nxt, p):
                    expand(path + [e], prob * q)
                return
        key = (
            (path[0].src,) + tuple(e.dst for e in path),
            tuple(e.t for e in path),
        )
        law[key] = law.get(key, 0.0) + prob

    for e, q in zip(insts, p_start):
        expand([e], q)
    return law


# Walk corpus files


def write_walks(walks: Iterable[Walk], items: Sequence[str], fh: IO[str]) -> None:
    for w in walks:
        line = " ".join(items[v] for v in w.vertices)
        if w.times is not None:
            line += "|" + " ".join(str(t) for t in w.times)
        fh.write(line + "\n")


def read_walks(fh: IO[str]) -> tuple[list[str], list[Walk]]:
    """Read a walk corpus; vertices are interned over the tokens in sorted order."""
    raw = []
    for lineno, line in enumerate(fh, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        tok_part, _, time_part = line.partition("|")
        tokens = tok_part.split()
        times = None
        if time_part:
            times = tuple(_num(float(t)) for t in time_part.split())
            if len(times) != len(tokens) - 1:
                raise ValueError(f"line {lineno}: expected {len(tokens) - 1} timestamps")
        raw.append((tokens, times))
    items = sorted({t for tokens, _ in raw for t in tokens})
    index = {it: i for i, it in enumerate(items)}
    return items, [Walk(tuple(index[t] for t in tokens), times) for tokens, times in raw]
