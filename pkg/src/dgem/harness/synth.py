"""Synthetic desk-scale data with planted cluster structure."""
from __future__ import annotations

import numpy as np

from dgem.corpus import Event
from dgem.ranker import Samples

T0 = 1_400_000_000


def synth_dataset(
    n_users: int,
    n_items: int,
    n_clusters: int,
    events_per_user: int,
    noise: float,
    seed: int,
    n_solitary: int = 0,
) -> tuple[list[Event], list[tuple[str, list[str]]]]:
    """Users shopping mostly inside one home cluster.

    Each event stays in the user's cluster with probability ``1 - noise``
    and otherwise picks any item. Per-user timestamps strictly increase.
    Metadata tags every item with its cluster token; ``n_solitary`` extra
    items get metadata but no events.
    """
    if min(n_users, n_items, n_clusters, events_per_user) < 1:
        raise ValueError("sizes must be positive")
    if n_items % n_clusters:
        raise ValueError("n_clusters must divide n_items")
    if not 0.0 <= noise < 1.0:
        raise ValueError("noise must lie in [0, 1)")
    if n_solitary < 0:
        raise ValueError("n_solitary must be >= 0")
    rng = np.random.default_rng(seed)
    per = n_items // n_clusters
    iw = len(str(n_items - 1))
    uw = len(str(n_users - 1))
    items = [f"i{j:0{iw}d}" for j in range(n_items)]
    events: list[Event] = []
    for u in range(n_users):
        home = int(rng.integers(n_clusters))
        stay = rng.random(events_per_user) >= noise
        local = home * per + rng.integers(per, size=events_per_user)
        anywhere = rng.integers(n_items, size=events_per_user)
        picks = np.where(stay, local, anywhere)
        times = T0 + int(rng.integers(0, 10**7)) + np.cumsum(rng.integers(1, 86_400, size=events_per_user))
        uid = f"u{u:0{uw}d}"
        events.extend(Event(uid, items[j], int(t)) for j, t in zip(picks, times))
    meta = [(items[j], [f"c{j // per}"]) for j in range(n_items)]
    sw = len(str(max(n_solitary - 1, 0)))
    for s in range(n_solitary):
        meta.append((f"s{s:0{sw}d}", [f"c{int(rng.integers(n_clusters))}"]))
    return events, meta


def attention_probe(
    n: int,
    dim: int = 16,
    n_clusters: int = 8,
    history_len: int = 10,
    items_per_cluster: int = 25,
    seed: int = 0,
) -> Samples:
    """Ranking task where only history items in the candidate's cluster matter.

    Item vectors are a cluster centroid plus noise, with one coordinate
    holding a +-1 quality flag. Each history holds 1 or 3 items from the
    candidate's cluster and the rest from other clusters; the label is the
    majority quality flag of the matching items.
    """
    rng = np.random.default_rng(seed)
    n_items = n_clusters * items_per_cluster
    centroids = rng.normal(size=(n_clusters, dim))
    centroids[:, -1] = 0.0
    cluster = np.repeat(np.arange(n_clusters), items_per_cluster)
    table = centroids[cluster] + 0.1 * rng.normal(size=(n_items, dim))
    quality = rng.choice([-1.0, 1.0], size=n_items)
    table[:, -1] = quality
    hist = np.empty((n, history_len), dtype=np.int64)
    cand = np.empty(n, dtype=np.int64)
    labels = np.empty(n)
    for r in range(n):
        c = int(rng.integers(n_items))
        k = int(rng.choice([1, 3]))
        same = np.flatnonzero((cluster == cluster[c]) & (np.arange(n_items) != c))
        other = np.flatnonzero(cluster != cluster[c])
        h = np.concatenate([rng.choice(same, size=k, replace=False),
                            rng.choice(other, size=history_len - k, replace=False)])
        rng.shuffle(h)
        hist[r] = h
        cand[r] = c
        labels[r] = 1.0 if quality[h[cluster[h] == cluster[c]]].sum() > 0 else 0.0
    return Samples(table, hist, cand, labels, [f"p{r % 100}" for r in range(n)])
