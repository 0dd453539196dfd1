"""Embedding-MLP ranker with optional candidate-conditioned attention pooling.

The user's history embeddings are pooled either by a plain mean (the
baseline) or by softmax weights from a small network over
``concat(h, c, h - c)``; the pooled vector is concatenated with the candidate
and fed to a ReLU MLP ending in one sigmoid logit. Training minimises the
mean negative log-likelihood with Adam on mini-batches. Gradients are
written out by hand so they can be checked against finite differences.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from typing import IO, Mapping, Sequence

import numpy as np

from dgem.corpus import Catalog, UserSequence
from dgem.embedder import sigmoid

EPS = 1e-12
CHECKPOINT_HEADER = "DGEM-RANKER v1"


class Pooling(str, enum.Enum):
    AVERAGE = "average"
    ATTENTION = "attention"


@dataclass(frozen=True)
class RankerConfig:
    pooling: Pooling = Pooling.ATTENTION
    hidden: tuple[int, ...] = (64, 32)
    attention_hidden: int = 36
    dropout: float = 0.5
    max_history: int = 20
    lr: float = 0.003
    epochs: int = 10
    batch_size: int = 256
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "pooling", Pooling(self.pooling))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError("hidden sizes must be a non-empty list of positive ints")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.max_history < 1 or self.attention_hidden < 1:
            raise ValueError("max_history and attention_hidden must be >= 1")
        if self.epochs < 1 or self.batch_size < 1 or not self.lr > 0:
            raise ValueError("epochs, batch_size and lr must be positive")


@dataclass
class TrainingInstance:
    history: Sequence[np.ndarray]
    candidate: np.ndarray
    label: int
    user_id: str | None = None


class RankerParams(dict):
    """Named parameter tensors: ``att_W1 att_b1 att_w2 att_b2``, ``W{i} b{i}``, ``out_w out_b``."""

    @property
    def n_layers(self) -> int:
        return sum(1 for k in self if k.startswith("W"))

    def copy(self) -> "RankerParams":
        return RankerParams({k: v.copy() for k, v in self.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([self[k].ravel() for k in sorted(self)])

    def set_flat(self, vec: np.ndarray) -> None:
        i = 0
        for k in sorted(self):
            n = self[k].size
            self[k] = vec[i:i + n].reshape(self[k].shape).copy()
            i += n


def init_params(dim: int, cfg: RankerConfig) -> RankerParams:
    rng = np.random.default_rng([int(cfg.seed) & (2**63 - 1), 11])
    a = cfg.attention_hidden
    p = RankerParams(
        att_W1=rng.normal(0, math.sqrt(2.0 / (3 * dim)), size=(3 * dim, a)),
        att_b1=np.zeros(a),
        att_w2=rng.normal(0, math.sqrt(1.0 / a), size=a),
        att_b2=np.zeros(1),
    )
    fan_in = 2 * dim
    for i, h in enumerate(cfg.hidden):
        p[f"W{i}"] = rng.normal(0, math.sqrt(2.0 / fan_in), size=(fan_in, h))
        p[f"b{i}"] = np.zeros(h)
        fan_in = h
    p["out_w"] = rng.normal(0, math.sqrt(1.0 / fan_in), size=fan_in)
    p["out_b"] = np.zeros(1)
    return p


def zero_params_like(p: RankerParams) -> RankerParams:
    return RankerParams({k: np.zeros_like(v) for k, v in p.items()})


# Attention unit


def _check_dims(u: np.ndarray, v: np.ndarray, params: RankerParams) -> None:
    d = params["att_W1"].shape[0] // 3
    if u.shape[-1] != d or v.shape[-1] != d:
        raise ValueError(f"expected {d}-dimensional vectors")


def attention_weight(u, v, params: RankerParams) -> float:
    """Unnormalised attention logit for history item ``u`` given candidate ``v``."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_dims(u, v, params)
    x = np.concatenate([u, v, u - v])
    hid = np.maximum(x @ params["att_W1"] + params["att_b1"], 0.0)
    return float(hid @ params["att_w2"] + params["att_b2"][0])


def attention_weight_grad(u, v, params: RankerParams) -> dict[str, np.ndarray]:
    """Gradient of :func:`attention_weight` w.r.t. the attention parameters."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_dims(u, v, params)
    x = np.concatenate([u, v, u - v])
    z = x @ params["att_W1"] + params["att_b1"]
    hid = np.maximum(z, 0.0)
    dz = params["att_w2"] * (z > 0)
    return {
        "att_W1": np.outer(x, dz),
        "att_b1": dz,
        "att_w2": hid,
        "att_b2": np.ones(1),
    }


# Packed batches


@dataclass
class Samples:
    """Instances packed as indices into an item table.

    ``hist`` is ``(N, H)`` with ``-1`` padding; histories keep the most
    recent items at the end.
    """

    table: np.ndarray
    hist: np.ndarray
    cand: np.ndarray
    labels: np.ndarray
    users: list = field(default_factory=list)
    item_ids: list | None = None

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    def subset(self, idx) -> "Samples":
        idx = np.asarray(idx, dtype=np.int64)
        users = [self.users[i] for i in idx] if self.users else []
        return Samples(self.table, self.hist[idx], self.cand[idx], self.labels[idx], users, self.item_ids)

    def instance(self, i: int) -> TrainingInstance:
        h = self.hist[i]
        return TrainingInstance(
            [self.table[j] for j in h if j >= 0],
            self.table[self.cand[i]],
            int(self.labels[i]),
            self.users[i] if self.users else None,
        )

    def __iter__(self):
        return (self.instance(i) for i in range(len(self)))


def pack(instances: Sequence[TrainingInstance] | Samples) -> Samples:
    if isinstance(instances, Samples):
        return instances
    instances = list(instances)
    if not instances:
        raise ValueError("no instances")
    H = max(len(x.history) for x in instances)
    rows: list[np.ndarray] = []
    hist = np.full((len(instances), H), -1, dtype=np.int64)
    cand = np.empty(len(instances), dtype=np.int64)
    labels = np.empty(len(instances))
    for n, x in enumerate(instances):
        if len(x.history) == 0:
            raise ValueError("instance with empty history")
        if x.label not in (0, 1):
            raise ValueError("labels must be 0 or 1")
        k = len(x.history)
        hist[n, H - k:] = np.arange(len(rows), len(rows) + k)
        rows.extend(x.history)
        cand[n] = len(rows)
        rows.append(x.candidate)
        labels[n] = x.label
    table = np.asarray(np.stack(rows), dtype=np.float64)
    return Samples(table, hist, cand, labels, [x.user_id for x in instances])


# Forward / backward


def _softmax_masked(s: np.ndarray, mask: np.ndarray) -> np.ndarray:
    s = np.where(mask, s, -np.inf)
    s = s - s.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(s), 0.0)
    return e / e.sum(axis=1, keepdims=True)


def _pool(H: np.ndarray, mask: np.ndarray, C: np.ndarray, params, pooling: Pooling, cache: dict):
    if pooling is Pooling.AVERAGE:
        w = mask / mask.sum(axis=1, keepdims=True)
    else:
        Cb = np.broadcast_to(C[:, None, :], H.shape)
        X = np.concatenate([H, Cb, H - Cb], axis=2)
        Z = X @ params["att_W1"] + params["att_b1"]
        A = np.maximum(Z, 0.0)
        s = A @ params["att_w2"] + params["att_b2"][0]
        w = _softmax_masked(s, mask)
        cache.update(X=X, Z=Z, A=A)
    cache["w"] = w
    return np.einsum("bh,bhd->bd", w, H)


def _forward(batch: Samples, params, cfg: RankerConfig, train: bool, rng=None):
    if batch.dim * 3 != params["att_W1"].shape[0]:
        raise ValueError("embedding dimension does not match parameters")
    mask = batch.hist >= 0
    if not mask.any(axis=1).all():
        raise ValueError("empty history")
    Hm = batch.table[np.where(mask, batch.hist, 0)] * mask[..., None]
    C = batch.table[batch.cand]
    cache: dict = {"H": Hm, "mask": mask}
    pooled = _pool(Hm, mask, C, params, cfg.pooling, cache)
    x = np.concatenate([pooled, C], axis=1)
    layers = []
    for i in range(params.n_layers):
        z = x @ params[f"W{i}"] + params[f"b{i}"]
        a = np.maximum(z, 0.0)
        keep = None
        if train and cfg.dropout > 0:
            keep = (rng.random(a.shape) >= cfg.dropout) / (1.0 - cfg.dropout)
            a = a * keep
        layers.append((x, z, keep))
        x = a
    logit = x @ params["out_w"] + params["out_b"][0]
    cache.update(layers=layers, last=x, logit=logit)
    return sigmoid(logit), cache


def _backward(batch: Samples, params, cfg: RankerConfig, p: np.ndarray, cache: dict) -> RankerParams:
    n = len(batch)
    grads = zero_params_like(params)
    dlogit = (p - batch.labels) / n
    grads["out_w"] = cache["last"].T @ dlogit
    grads["out_b"] = np.array([dlogit.sum()])
    dx = np.outer(dlogit, params["out_w"])
    for i in reversed(range(params.n_layers)):
        x, z, keep = cache["layers"][i]
        da = dx if keep is None else dx * keep
        dz = da * (z > 0)
        grads[f"W{i}"] = x.T @ dz
        grads[f"b{i}"] = dz.sum(axis=0)
        dx = dz @ params[f"W{i}"].T
    if cfg.pooling is Pooling.ATTENTION:
        d = batch.dim
        dpooled = dx[:, :d]
        w, Hm = cache["w"], cache["H"]
        dw = np.einsum("bd,bhd->bh", dpooled, Hm)
        ds = w * (dw - (w * dw).sum(axis=1, keepdims=True))
        A, Z, X = cache["A"], cache["Z"], cache["X"]
        grads["att_w2"] = np.einsum("bha,bh->a", A, ds)
        grads["att_b2"] = np.array([ds.sum()])
        dZ = ds[..., None] * params["att_w2"] * (Z > 0)
        grads["att_W1"] = X.reshape(-1, X.shape[2]).T @ dZ.reshape(-1, dZ.shape[2])
        grads["att_b1"] = dZ.sum(axis=(0, 1))
    return grads


def pool_history(history, candidate, params: RankerParams, mode: Pooling) -> np.ndarray:
    if len(history) == 0:
        raise ValueError("empty history")
    H = np.asarray(history, dtype=np.float64)[None]
    mask = np.ones(H.shape[:2], dtype=bool)
    C = np.asarray(candidate, dtype=np.float64)[None]
    _check_dims(H[0, 0], C[0], params)
    return _pool(H, mask, C, params, Pooling(mode), {})[0]


def forward(
    inst: TrainingInstance,
    params: RankerParams,
    cfg: RankerConfig,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> float:
    if train_mode and rng is None:
        rng = np.random.default_rng(cfg.seed)
    p, _ = _forward(pack([inst]), params, cfg, train_mode, rng)
    return float(p[0])


def predict(samples, params: RankerParams, cfg: RankerConfig, batch_size: int = 4096) -> np.ndarray:
    s = pack(samples)
    out = np.empty(len(s))
    for lo in range(0, len(s), batch_size):
        idx = np.arange(lo, min(len(s), lo + batch_size))
        out[idx], _ = _forward(s.subset(idx), params, cfg, False)
    return out


def nll_loss(preds, labels) -> float:
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if preds.shape != labels.shape:
        raise ValueError("preds and labels differ in length")
    if preds.size == 0:
        raise ValueError("empty input")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be 0 or 1")
    p = np.clip(preds, EPS, 1.0 - EPS)
    return float(-np.mean(labels * np.log(p) + (1 - labels) * np.log(1 - p)))


def loss_and_grad(samples, params: RankerParams, cfg: RankerConfig, train_mode=False, rng=None):
    """Batch NLL and its gradient; with ``train_mode`` dropout masks come from ``rng``."""
    s = pack(samples)
    p, cache = _forward(s, params, cfg, train_mode, rng)
    return nll_loss(p, s.labels), _backward(s, params, cfg, p, cache)


class _Adam:
    def __init__(self, params: RankerParams, lr: float, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = zero_params_like(params)
        self.v = zero_params_like(params)
        self.t = 0

    def step(self, params: RankerParams, grads: RankerParams) -> None:
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def train_ranker(instances, cfg: RankerConfig = RankerConfig()) -> tuple[RankerParams, list[float]]:
    """Mini-batch Adam on the NLL; returns parameters and per-epoch mean batch loss."""
    s = pack(instances)
    if len(s) == 0:
        raise ValueError("no training instances")
    params = init_params(s.dim, cfg)
    if cfg.pooling is Pooling.AVERAGE:
        # unused by average pooling; zeroed so checkpoints are unambiguous
        for k in ("att_W1", "att_b1", "att_w2", "att_b2"):
            params[k][...] = 0.0
    opt = _Adam(params, cfg.lr)
    rng = np.random.default_rng([int(cfg.seed) & (2**63 - 1), 13])
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(s))
        total = 0.0
        for lo in range(0, len(s), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            loss, grads = loss_and_grad(s.subset(idx), params, cfg, True, rng)
            opt.step(params, grads)
            total += loss * len(idx)
        history.append(total / len(s))
    return params, history


# Sample construction


@dataclass
class SampleSplit:
    train: Samples
    test: Samples


def build_training_samples(
    sequences: Sequence[UserSequence],
    item_vectors: Mapping[str, np.ndarray],
    catalog: Catalog,
    neg_ratio: int = 1,
    max_history: int = 20,
    rng: np.random.Generator | None = None,
    split_fraction: float = 0.8,
) -> SampleSplit:
    """Next-item instances per user, split chronologically per user.

    Each position ``i >= 1`` of a user's sequence yields a positive (history
    = up to ``max_history`` preceding items, candidate = item ``i``) plus
    ``neg_ratio`` negatives whose candidates are drawn uniformly from catalog
    items the user never touched. The first ``ceil(split_fraction * n)``
    positions of a user go to train, the rest to test.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if neg_ratio < 0:
        raise ValueError("neg_ratio must be >= 0")
    if not 0.0 < split_fraction <= 1.0:
        raise ValueError("split_fraction must lie in (0, 1]")
    item_ids = sorted(catalog.items | {it for s in sequences for it, _ in s.items})
    missing = [it for it in item_ids if it not in item_vectors]
    if missing:
        raise KeyError(f"{len(missing)} items lack vectors, e.g. {missing[0]!r}")
    index = {it: i for i, it in enumerate(item_ids)}
    table = np.stack([np.asarray(item_vectors[it], dtype=np.float64) for it in item_ids])
    all_idx = np.array([index[it] for it in sorted(catalog.items)], dtype=np.int64)

    parts = {"train": ([], [], [], []), "test": ([], [], [], [])}
    for seq in sequences:
        ids = [index[it] for it, _ in seq.items]
        if len(ids) < 2:
            continue
        seen = np.zeros(len(item_ids), dtype=bool)
        seen[ids] = True
        pool = all_idx[~seen[all_idx]]
        n_pos = len(ids) - 1
        n_train = math.ceil(split_fraction * n_pos)
        for i in range(1, len(ids)):
            h = ids[max(0, i - max_history):i]
            row = np.full(max_history, -1, dtype=np.int64)
            row[max_history - len(h):] = h
            split = parts["train" if i - 1 < n_train else "test"]
            cands = [ids[i]]
            labels = [1]
            if neg_ratio and len(pool):
                cands += pool[rng.integers(len(pool), size=neg_ratio)].tolist()
                labels += [0] * neg_ratio
            for c, y in zip(cands, labels):
                split[0].append(row)
                split[1].append(c)
                split[2].append(y)
                split[3].append(seq.user_id)

    def make(rows, cands, labels, users) -> Samples:
        hist = np.array(rows, dtype=np.int64).reshape(-1, max_history)
        return Samples(table, hist, np.array(cands, dtype=np.int64),
                       np.array(labels, dtype=np.float64), users, item_ids)

    return SampleSplit(make(*parts["train"]), make(*parts["test"]))


# Checkpoints


def save_checkpoint(params: RankerParams, cfg: RankerConfig, fh: IO[str]) -> None:
    conf = asdict(cfg)
    conf["pooling"] = cfg.pooling.value
    conf["hidden"] = list(cfg.hidden)
    payload = {
        "config": conf,
        "tensors": {k: {"shape": list(v.shape), "data": [float(x) for x in v.ravel()]}
                    for k, v in sorted(params.items())},
    }
    fh.write(CHECKPOINT_HEADER + "\n")
    json.dump(payload, fh)
    fh.write("\n")


def load_checkpoint(fh: IO[str]) -> tuple[RankerParams, RankerConfig]:
    header = fh.readline().strip()
    if header != CHECKPOINT_HEADER:
        raise ValueError(f"not a ranker checkpoint (header {header!r})")
    payload = json.load(fh)
    cfg = RankerConfig(**payload["config"])
    params = RankerParams({
        k: np.array(t["data"], dtype=np.float64).reshape(t["shape"])
        for k, t in payload["tensors"].items()
    })
    return params, cfg
