"""Skip-gram / CBOW with negative sampling over walk corpora.

Also aggregates auxiliary-information vectors so that items with no
interactions (solitary items) still get an embedding: an item's vector is
the plain mean of its own row (when it has one) and its attribute vectors.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

import numba
import numpy as np

from dgem.corpus import Catalog
from dgem.walker import AliasTable, Walk


class TrainMode(str, enum.Enum):
    SKIPGRAM = "sg"
    CBOW = "cbow"


@dataclass(frozen=True)
class EmbedConfig:
    dim: int = 180
    window: int = 20
    negatives: int = 5
    epochs: int = 5
    lr0: float = 0.025
    mode: TrainMode = TrainMode.SKIPGRAM
    seed: int = 0
    fast: bool = False  # float32 matrices; not bit-reproducible across platforms

    def __post_init__(self):
        if self.dim < 1 or self.window < 1 or self.negatives < 1 or self.epochs < 1:
            raise ValueError("dim, window, negatives and epochs must all be >= 1")
        if not self.lr0 > 0:
            raise ValueError("lr0 must be positive")
        object.__setattr__(self, "mode", TrainMode(self.mode))


@dataclass
class EmbeddingMatrix:
    input: np.ndarray
    output: np.ndarray
    items: tuple[str, ...] | None = None
    loss_history: list[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.input.shape[1]

    def vectors(self) -> dict[str, np.ndarray]:
        if self.items is None:
            raise ValueError("matrix has no item labels")
        return {it: self.input[i] for i, it in enumerate(self.items)}


def sigmoid(x):
    """Logistic function, stable for large ``|x|``; works on scalars and arrays."""
    if np.ndim(x) == 0:
        x = float(x)
        if x >= 0:
            return 1.0 / (1.0 + math.exp(-x))
        z = math.exp(x)
        return z / (1.0 + z)
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    z = np.exp(x[~pos])
    out[~pos] = z / (1.0 + z)
    return out


def _neg_log_sigmoid(x: float) -> float:
    # -log sigmoid(x) = log(1 + e^-x)
    if x >= 0:
        return math.log1p(math.exp(-x))
    return -x + math.log1p(math.exp(x))


def pair_loss_grad(
    center: int, context: int, negatives: Sequence[int], M: EmbeddingMatrix
) -> tuple[float, dict[str, dict[int, np.ndarray]]]:
    """Loss and sparse gradients for one (center, context) pair.

    loss = -log s(out[ctx].in[c]) - sum_t log s(-out[t].in[c]).
    Gradients are keyed ``{"input": {row: g}, "output": {row: g}}``; a
    negative drawn twice accumulates into one entry.
    """
    if M.input.shape != M.output.shape:
        raise ValueError("input and output matrices differ in shape")
    if context in negatives or center in negatives:
        raise ValueError("negatives must exclude center and context")
    h = M.input[center]
    rows = [context, *negatives]
    labels = [1.0] + [0.0] * len(negatives)
    loss = 0.0
    g_in = np.zeros_like(h)
    g_out: dict[int, np.ndarray] = {}
    for r, y in zip(rows, labels):
        x = float(M.output[r] @ h)
        loss += _neg_log_sigmoid(x) if y else _neg_log_sigmoid(-x)
        g = sigmoid(x) - y
        g_in += g * M.output[r]
        g_out[r] = g_out.get(r, 0.0) + g * h
    return loss, {"input": {center: g_in}, "output": g_out}


@dataclass
class UnigramTable:
    """Negative-sampling distribution: corpus counts raised to ``power``."""

    counts: np.ndarray
    power: float = 0.75

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.float64)
        w = self.counts ** self.power
        self.support = np.flatnonzero(w > 0)
        if len(self.support) == 0:
            raise ValueError("empty vocabulary")
        self.alias = AliasTable(w[self.support])

    def probabilities(self) -> np.ndarray:
        p = np.zeros(len(self.counts))
        p[self.support] = self.alias.probabilities
        return p


def unigram_table(walks: Iterable[Walk], n_vertices: int, power: float = 0.75) -> UnigramTable:
    counts = np.zeros(n_vertices)
    for w in walks:
        np.add.at(counts, np.asarray(w.vertices), 1)
    return UnigramTable(counts, power)


def negative_sample(
    table: UnigramTable,
    k: int,
    exclude: Iterable[int],
    rng: np.random.Generator,
    max_retries: int = 100,
) -> list[int]:
    exclude = set(exclude)
    if not set(table.support.tolist()) - exclude:
        raise ValueError("no vertex left to sample after exclusions")
    out = []
    for _ in range(k):
        for _ in range(max_retries):
            v = int(table.support[table.alias.sample(rng)])
            if v not in exclude:
                out.append(v)
                break
        else:
            raise RuntimeError(f"negative sampling exceeded {max_retries} retries")
    return out


_PATTERNS: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def _window_pattern(length: int, window: int):
    key = (length, window)
    if key not in _PATTERNS:
        ci, cj = [], []
        for i in range(length):
            for j in range(max(0, i - window), min(length, i + window + 1)):
                if j != i:
                    ci.append(i)
                    cj.append(j)
        _PATTERNS[key] = (np.array(ci, dtype=np.int64), np.array(cj, dtype=np.int64))
    return _PATTERNS[key]


def context_pairs(walks: Sequence[Walk], window: int) -> tuple[np.ndarray, np.ndarray]:
    """All (center, context) vertex pairs within ``window`` positions, walk by walk."""
    cs, xs = [], []
    for w in walks:
        arr = np.asarray(w.vertices, dtype=np.int64)
        ci, cj = _window_pattern(len(arr), window)
        cs.append(arr[ci])
        xs.append(arr[cj])
    if not cs:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    return np.concatenate(cs), np.concatenate(xs)


def context_windows(walks: Sequence[Walk], window: int):
    """CBOW layout: one target per walk position with its clamped context slice.

    Returns ``(targets, ctx_flat, ptr)``; the context of target ``p`` is
    ``ctx_flat[ptr[p]:ptr[p + 1]]``.
    """
    targets, flat, sizes = [], [], []
    for w in walks:
        arr = np.asarray(w.vertices, dtype=np.int64)
        L = len(arr)
        if L < 2:
            continue
        for i in range(L):
            lo, hi = max(0, i - window), min(L, i + window + 1)
            ctx = np.concatenate([arr[lo:i], arr[i + 1:hi]])
            targets.append(arr[i])
            flat.append(ctx)
            sizes.append(len(ctx))
    ptr = np.zeros(len(sizes) + 1, dtype=np.int64)
    np.cumsum(sizes, out=ptr[1:])
    if not flat:
        return np.empty(0, np.int64), np.empty(0, np.int64), ptr
    return np.array(targets, dtype=np.int64), np.concatenate(flat), ptr


# Numba kernels. Each update computes every score from the current
# parameters before writing, so one step equals a plain SGD step on
# pair_loss_grad.


@numba.njit(cache=True)
def _nls(x):
    if x >= 0:
        return math.log1p(math.exp(-x))
    return -x + math.log1p(math.exp(x))


@numba.njit(cache=True)
def _sig(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


@numba.njit(cache=True)
def _draw(support, prob, alias, ex1, ex2, retries):
    m = prob.shape[0]
    for _ in range(retries):
        i = np.random.randint(0, m)
        if np.random.random() >= prob[i]:
            i = alias[i]
        v = support[i]
        if v != ex1 and v != ex2:
            return v
    return -1


@numba.njit(cache=True)
def sgns_step(inp, out, center, rows, labels, lr):
    """One SGD step on ``pair_loss_grad``; ``rows[0]`` is the context. Returns the loss."""
    d = inp.shape[1]
    n = rows.shape[0]
    h = inp[center].copy()
    grad_h = np.zeros(d)
    gs = np.empty(n)
    loss = 0.0
    for r in range(n):
        x = 0.0
        for a in range(d):
            x += out[rows[r], a] * h[a]
        if labels[r] > 0:
            loss += _nls(x)
        else:
            loss += _nls(-x)
        gs[r] = _sig(x) - labels[r]
        for a in range(d):
            grad_h[a] += gs[r] * out[rows[r], a]
    for r in range(n):
        for a in range(d):
            out[rows[r], a] -= lr * gs[r] * h[a]
    for a in range(d):
        inp[center, a] -= lr * grad_h[a]
    return loss


@numba.njit(cache=True)
def _sg_epoch(inp, out, centers, contexts, support, prob, alias, k, lr0, lr_min,
              step0, total, seed, retries):
    np.random.seed(seed)
    rows = np.empty(k + 1, np.int64)
    labels = np.zeros(k + 1)
    labels[0] = 1.0
    loss = 0.0
    for p in range(centers.shape[0]):
        c = centers[p]
        o = contexts[p]
        rows[0] = o
        nk = 1
        for _ in range(k):
            v = _draw(support, prob, alias, c, o, retries)
            if v >= 0:
                rows[nk] = v
                nk += 1
        lr = lr0 - (lr0 - lr_min) * (step0 + p) / total
        loss += sgns_step(inp, out, c, rows[:nk], labels[:nk], lr)
    return loss


@numba.njit(cache=True)
def _cbow_epoch(inp, out, targets, ctx, ptr, support, prob, alias, k, lr0, lr_min,
                step0, total, seed, retries):
    np.random.seed(seed)
    d = inp.shape[1]
    rows = np.empty(k + 1, np.int64)
    gs = np.empty(k + 1)
    loss = 0.0
    for p in range(targets.shape[0]):
        t = targets[p]
        lo = ptr[p]
        hi = ptr[p + 1]
        nc = hi - lo
        h = np.zeros(d)
        for q in range(lo, hi):
            for a in range(d):
                h[a] += inp[ctx[q], a]
        for a in range(d):
            h[a] /= nc
        rows[0] = t
        nk = 1
        for _ in range(k):
            v = _draw(support, prob, alias, t, t, retries)
            if v >= 0:
                rows[nk] = v
                nk += 1
        lr = lr0 - (lr0 - lr_min) * (step0 + p) / total
        grad_h = np.zeros(d)
        for r in range(nk):
            x = 0.0
            for a in range(d):
                x += out[rows[r], a] * h[a]
            y = 1.0 if r == 0 else 0.0
            loss += _nls(x) if y > 0 else _nls(-x)
            gs[r] = _sig(x) - y
            for a in range(d):
                grad_h[a] += gs[r] * out[rows[r], a]
        for r in range(nk):
            for a in range(d):
                out[rows[r], a] -= lr * gs[r] * h[a]
        for q in range(lo, hi):
            for a in range(d):
                inp[ctx[q], a] -= lr * grad_h[a] / nc
    return loss


def _epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([int(seed) & (2**63 - 1), 7, epoch]).generate_state(1)[0])


def init_matrices(n: int, cfg: EmbedConfig) -> EmbeddingMatrix:
    dtype = np.float32 if cfg.fast else np.float64
    rng = np.random.default_rng([int(cfg.seed) & (2**63 - 1), 3])
    inp = rng.uniform(-0.5 / cfg.dim, 0.5 / cfg.dim, size=(n, cfg.dim)).astype(dtype)
    return EmbeddingMatrix(inp, np.zeros((n, cfg.dim), dtype=dtype))


def train_embeddings(
    walks: Sequence[Walk],
    cfg: EmbedConfig = EmbedConfig(),
    n_vertices: int | None = None,
    items: Sequence[str] | None = None,
) -> EmbeddingMatrix:
    """Fit input/output vectors on a walk corpus.

    The learning rate falls linearly from ``lr0`` to ``lr0 / 10000`` over all
    updates. The per-epoch mean loss (evaluated before each update) is kept in
    ``loss_history``.
    """
    walks = list(walks)
    if not walks:
        raise ValueError("empty walk corpus")
    if n_vertices is None:
        n_vertices = len(items) if items is not None else 1 + max(max(w.vertices) for w in walks)
    if n_vertices == 0:
        raise ValueError("vocabulary is empty")
    M = init_matrices(n_vertices, cfg)
    M.items = tuple(items) if items is not None else None
    table = unigram_table(walks, n_vertices)
    support = table.support.astype(np.int64)
    prob, alias = table.alias.prob, table.alias.alias.astype(np.int64)

    if cfg.mode is TrainMode.SKIPGRAM:
        centers, contexts = context_pairs(walks, cfg.window)
        per_epoch = len(centers)
    else:
        targets, ctx, ptr = context_windows(walks, cfg.window)
        per_epoch = len(targets)
    if per_epoch == 0:
        raise ValueError("walk corpus yields no training pairs")
    total = per_epoch * cfg.epochs
    lr_min = cfg.lr0 * 1e-4
    retries = 100
    for epoch in range(cfg.epochs):
        seed = _epoch_seed(cfg.seed, epoch)
        step0 = epoch * per_epoch
        if cfg.mode is TrainMode.SKIPGRAM:
            loss = _sg_epoch(M.input, M.output, centers, contexts, support, prob, alias,
                             cfg.negatives, cfg.lr0, lr_min, step0, total, seed, retries)
        else:
            loss = _cbow_epoch(M.input, M.output, targets, ctx, ptr, support, prob, alias,
                               cfg.negatives, cfg.lr0, lr_min, step0, total, seed, retries)
        M.loss_history.append(float(loss) / per_epoch)
    return M


# Cold start


@dataclass
class ColdStartInput:
    base: np.ndarray | None
    aux: list[np.ndarray] = field(default_factory=list)


def aggregate_cold_start(x: ColdStartInput) -> np.ndarray:
    vecs = ([] if x.base is None else [np.asarray(x.base, dtype=np.float64)])
    vecs += [np.asarray(a, dtype=np.float64) for a in x.aux]
    if not vecs:
        raise ValueError("nothing to aggregate")
    if len({v.shape for v in vecs}) != 1:
        raise ValueError("vectors differ in dimension")
    return np.mean(vecs, axis=0)


def aux_token_embeddings(
    vectors: Mapping[str, np.ndarray], catalog: Catalog
) -> dict[str, np.ndarray]:
    """Each attribute token -> mean vector of the interacted items carrying it."""
    sums: dict[str, np.ndarray] = {}
    counts: dict[str, int] = {}
    for item in sorted(catalog.aux_info):
        if item in catalog.solitary or item not in vectors:
            continue
        for tok in dict.fromkeys(catalog.aux_info[item]):
            v = np.asarray(vectors[item], dtype=np.float64)
            sums[tok] = sums[tok] + v if tok in sums else v.copy()
            counts[tok] = counts.get(tok, 0) + 1
    return {tok: sums[tok] / counts[tok] for tok in sums}


def embed_catalog(
    M: EmbeddingMatrix | Mapping[str, np.ndarray],
    catalog: Catalog,
    aux_embeddings: Mapping[str, np.ndarray],
) -> dict[str, np.ndarray]:
    """One vector per catalog item.

    Interacted items average their own row with their known attribute
    vectors; solitary items average attribute vectors only. Attribute tokens
    without a vector are skipped.
    """
    rows = M.vectors() if isinstance(M, EmbeddingMatrix) else M
    out: dict[str, np.ndarray] = {}
    for item in sorted(catalog.items):
        aux = [aux_embeddings[t] for t in catalog.aux_info.get(item, ()) if t in aux_embeddings]
        if item in catalog.solitary:
            if not aux:
                raise ValueError(f"solitary item {item!r} has no known auxiliary tokens")
            out[item] = aggregate_cold_start(ColdStartInput(None, aux))
        else:
            if item not in rows:
                raise KeyError(f"interacted item {item!r} has no embedding row")
            out[item] = aggregate_cold_start(ColdStartInput(rows[item], aux))
    return out


# Embedding files


def write_embeddings(vectors: Mapping[str, np.ndarray], fh: IO[str]) -> None:
    items = list(vectors)
    d = len(next(iter(vectors.values()))) if items else 0
    fh.write(f"{len(items)} {d}\n")
    for it in items:
        fh.write(it + " " + " ".join(f"{float(x):.17g}" for x in vectors[it]) + "\n")


def read_embeddings(fh: IO[str]) -> dict[str, np.ndarray]:
    n, d = (int(x) for x in fh.readline().split())
    out: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(fh, start=2):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != d + 1:
            raise ValueError(f"line {lineno}: expected {d + 1} fields, got {len(parts)}")
        out[parts[0]] = np.array([float(x) for x in parts[1:]])
    if len(out) != n:
        raise ValueError(f"header declares {n} rows, file holds {len(out)}")
    return out
