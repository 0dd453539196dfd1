"""Directed weighted item graph stored as adjacency lists.

Every ordered pair of consecutive items in a user's sequence adds one to the
frequency weight of the edge earlier -> later. In dynamic mode the later
item's timestamp is also appended to the edge's time list, so an edge with
``wf == k`` carries ``k`` timestamped instances.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import IO, Iterable, Sequence

import numpy as np

from dgem.corpus import UserSequence

STATIC = "static"
DYNAMIC = "dynamic"
MODES = (STATIC, DYNAMIC)

HEADER = "DGEM-GRAPH v1"
# vertex directive; looks like a comment to readers that only want edges
_VERTEX_TAG = "#!vertex"


@dataclass(frozen=True)
class EdgeRecord:
    dst: int
    wf: int
    wt: tuple = ()


class ItemGraph:
    """Immutable once built. Vertex ids are dense indices into ``items``."""

    def __init__(self, mode: str, items: Sequence[str], adj: list[list[EdgeRecord]]):
        if mode not in MODES:
            raise ValueError(f"unknown graph mode {mode!r}")
        if len(adj) != len(items):
            raise ValueError("adjacency list count does not match vertex count")
        self.mode = mode
        self.items = tuple(items)
        self.index = {it: i for i, it in enumerate(self.items)}
        if len(self.index) != len(self.items):
            raise ValueError("duplicate item ids in vertex table")
        self.adj = [tuple(sorted(row, key=lambda e: e.dst)) for row in adj]
        for row in self.adj:
            dsts = [e.dst for e in row]
            if len(set(dsts)) != len(dsts):
                raise ValueError("duplicate destination in adjacency list")

    @property
    def n(self) -> int:
        return len(self.items)

    @property
    def n_edges(self) -> int:
        return sum(len(row) for row in self.adj)

    @property
    def total_weight(self) -> int:
        return sum(e.wf for row in self.adj for e in row)

    def edges(self):
        """Yield ``(src, EdgeRecord)`` in src then dst order."""
        for src, row in enumerate(self.adj):
            for e in row:
                yield src, e

    def has_edge(self, src: int, dst: int) -> bool:
        return any(e.dst == dst for e in self.adj[src])

    def as_static(self) -> "ItemGraph":
        """Same vertices and frequency weights with time lists dropped."""
        adj = [[EdgeRecord(e.dst, e.wf) for e in row] for row in self.adj]
        return ItemGraph(STATIC, self.items, adj)

    def edge_map(self) -> dict[tuple[str, str], tuple[int, tuple]]:
        """Label-keyed view, handy for comparing graphs."""
        return {
            (self.items[s], self.items[e.dst]): (e.wf, tuple(e.wt))
            for s, e in self.edges()
        }

    def __eq__(self, other) -> bool:
        if not isinstance(other, ItemGraph):
            return NotImplemented
        return (
            self.mode == other.mode
            and self.items == other.items
            and self.adj == other.adj
        )

    def __repr__(self) -> str:
        return f"ItemGraph(mode={self.mode}, n={self.n}, m={self.n_edges})"

    # Flattened views used by the walkers.

    @cached_property
    def out_arrays(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per vertex ``(dst, wf)`` arrays."""
        return [
            (
                np.array([e.dst for e in row], dtype=np.int64),
                np.array([e.wf for e in row], dtype=np.float64),
            )
            for row in self.adj
        ]

    @cached_property
    def temporal_out(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per vertex out-instances ``(times, dst)`` sorted by (time, dst)."""
        out = []
        for row in self.adj:
            pairs = sorted((t, e.dst) for e in row for t in e.wt)
            out.append(
                (
                    np.array([p[0] for p in pairs], dtype=np.float64),
                    np.array([p[1] for p in pairs], dtype=np.int64),
                )
            )
        return out

    @cached_property
    def instances(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All temporal edge instances ``(src, dst, t)`` sorted by (t, src, dst)."""
        trip = sorted((t, s, e.dst) for s, e in self.edges() for t in e.wt)
        return (
            np.array([p[1] for p in trip], dtype=np.int64),
            np.array([p[2] for p in trip], dtype=np.int64),
            np.array([p[0] for p in trip], dtype=np.float64),
        )


def _check_vertex(g: ItemGraph, v: int) -> None:
    if not 0 <= v < g.n:
        raise IndexError(f"vertex {v} out of range for graph with {g.n} vertices")


def out_edges(g: ItemGraph, v: int) -> tuple[EdgeRecord, ...]:
    _check_vertex(g, v)
    return g.adj[v]


def total_out_weight(g: ItemGraph, v: int) -> int:
    _check_vertex(g, v)
    return sum(e.wf for e in g.adj[v])


def _build(sequences: Iterable[UserSequence], mode: str, items: Iterable[str] = ()) -> ItemGraph:
    sequences = list(sequences)
    vocab = set(items)
    for seq in sequences:
        vocab.update(it for it, _ in seq.items)
    # sorted interning keeps the build independent of user order
    labels = sorted(vocab)
    index = {it: i for i, it in enumerate(labels)}
    wf: dict[tuple[int, int], int] = {}
    wt: dict[tuple[int, int], list] = {}
    for seq in sequences:
        for (a, _), (b, tb) in zip(seq.items, seq.items[1:]):
            key = (index[a], index[b])
            wf[key] = wf.get(key, 0) + 1
            if mode == DYNAMIC:
                wt.setdefault(key, []).append(tb)
    adj: list[list[EdgeRecord]] = [[] for _ in labels]
    for (s, d), w in wf.items():
        times = tuple(sorted(wt[(s, d)])) if mode == DYNAMIC else ()
        adj[s].append(EdgeRecord(d, w, times))
    return ItemGraph(mode, labels, adj)


def build_static_graph(sequences: Iterable[UserSequence], items: Iterable[str] = ()) -> ItemGraph:
    """Count consecutive item pairs into frequency-weighted edges.

    ``items`` adds vertices that may have no edges.
    """
    return _build(sequences, STATIC, items)


def build_dynamic_graph(sequences: Iterable[UserSequence], items: Iterable[str] = ()) -> ItemGraph:
    """Like :func:`build_static_graph`, also recording each pair's later timestamp."""
    return _build(sequences, DYNAMIC, items)


def graph_from_edges(
    mode: str,
    edges: Iterable[tuple],
    items: Iterable[str] = (),
) -> ItemGraph:
    """Build a graph from ``(src, dst, wf)`` or, in dynamic mode, ``(src, dst, times)`` rows.

    Timestamps may be any real numbers here, which is useful for synthetic
    clocks in tests.
    """
    edges = list(edges)
    labels = sorted(set(items) | {e[0] for e in edges} | {e[1] for e in edges})
    index = {it: i for i, it in enumerate(labels)}
    adj: list[list[EdgeRecord]] = [[] for _ in labels]
    for row in edges:
        s, d = index[row[0]], index[row[1]]
        if mode == DYNAMIC:
            times = tuple(sorted(row[2]))
            if not times:
                raise ValueError("dynamic edge needs at least one timestamp")
            adj[s].append(EdgeRecord(d, len(times), times))
        else:
            w = int(row[2])
            if w < 1:
                raise ValueError("frequency weight must be >= 1")
            adj[s].append(EdgeRecord(d, w))
    return ItemGraph(mode, labels, adj)


def _fmt_time(t) -> str:
    if isinstance(t, (int, np.integer)) or float(t).is_integer():
        return str(int(t))
    return repr(float(t))


def write_graph(g: ItemGraph, fh: IO[str]) -> None:
    fh.write(f"{HEADER} {g.mode} {g.n} {g.n_edges}\n")
    for item in g.items:
        fh.write(f"{_VERTEX_TAG}\t{item}\n")
    for s, e in g.edges():
        line = f"{g.items[s]}\t{g.items[e.dst]}\t{e.wf}"
        if g.mode == DYNAMIC:
            line += "\t" + ",".join(_fmt_time(t) for t in e.wt)
        fh.write(line + "\n")


def _parse_time(tok: str):
    try:
        return int(tok)
    except ValueError:
        return float(tok)


def read_graph(fh: IO[str]) -> ItemGraph:
    header = fh.readline().split()
    if header[:2] != HEADER.split() or len(header) != 5:
        raise ValueError(f"not a graph file (header {' '.join(header)!r})")
    mode, n, m = header[2], int(header[3]), int(header[4])
    vertices: list[str] = []
    rows = []
    for lineno, raw in enumerate(fh, start=2):
        text = raw.rstrip("\r\n")
        if text.startswith(_VERTEX_TAG):
            vertices.append(text.split("\t", 1)[1])
            continue
        if not text.strip() or text.startswith("#"):
            continue
        parts = text.split("\t")
        if mode == DYNAMIC:
            if len(parts) != 4:
                raise ValueError(f"line {lineno}: dynamic edge needs 4 fields")
            times = [_parse_time(t) for t in parts[3].split(",")]
            if len(times) != int(parts[2]):
                raise ValueError(f"line {lineno}: wf does not match time list length")
            rows.append((parts[0], parts[1], times))
        else:
            if len(parts) < 3:
                raise ValueError(f"line {lineno}: edge needs 3 fields")
            rows.append((parts[0], parts[1], int(parts[2])))
    g = graph_from_edges(mode, rows, vertices)
    if vertices and list(g.items) != sorted(vertices):
        raise ValueError("vertex table inconsistent with edges")
    if (vertices and g.n != n) or g.n_edges != m:
        raise ValueError(f"header declares n={n} m={m}, file holds n={g.n} m={g.n_edges}")
    return g
