"""End-to-end static and dynamic runs, sweeps and repeated runs."""
from __future__ import annotations

import contextlib
import logging
import math
import time
from pathlib import Path

import numpy as np

from dgem.corpus import (Catalog, Event, build_catalog, build_sequences, filter_min_activity,
                         parse_events, parse_metadata)
from dgem.embedder import aux_token_embeddings, embed_catalog, train_embeddings
from dgem.graph import DYNAMIC, STATIC, build_dynamic_graph, build_static_graph
from dgem.harness.config import ConfigError, PipelineConfig, derive_seed
from dgem.harness.synth import synth_dataset
from dgem.metrics import evaluate
from dgem.ranker import build_training_samples, predict, train_ranker
from dgem.walker import BiasMode, static_walks, temporal_walks

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"stage {stage!r} failed: {exc}")
        self.stage = stage


class _Timer:
    def __init__(self):
        self.timings: dict[str, float] = {}

    @contextlib.contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc
        finally:
            self.timings[name] = round(time.perf_counter() - t0, 4)
        log.info("stage %s done in %.2fs", name, self.timings[name])


def holdout_dynamic(events: list[Event], fraction: float = 1 / 3) -> tuple[list[Event], list[Event]]:
    """Hold out the latest ``ceil(fraction * n)`` events (stable on time ties)."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    if len(events) < 2:
        raise ValueError("need at least 2 events")
    ordered = sorted(events, key=lambda e: e.timestamp)
    n_out = math.ceil(fraction * len(ordered))
    return ordered[: len(ordered) - n_out], ordered[len(ordered) - n_out:]


def load_data(cfg: PipelineConfig) -> tuple[list[Event], list[tuple[str, list[str]]]]:
    if cfg.data.source == "synth":
        s = cfg.data.synth
        return synth_dataset(s.n_users, s.n_items, s.n_clusters, s.events_per_user, s.noise,
                             derive_seed(cfg.seed, "synth"), s.n_solitary)
    with open(cfg.io.events, encoding="utf-8") as fh:
        events = parse_events(fh, cfg.data.format)
    meta = []
    if cfg.io.metadata:
        with open(cfg.io.metadata, encoding="utf-8") as fh:
            meta = parse_metadata(fh)
    return events, meta


def _rank_and_score(cfg: PipelineConfig, sequences, vectors, catalog: Catalog, timer: _Timer, stats: dict):
    with timer.stage("samples"):
        rng = np.random.default_rng(derive_seed(cfg.seed, "samples"))
        split = build_training_samples(sequences, vectors, catalog, cfg.eval.neg_ratio,
                                       cfg.rank.max_history, rng, cfg.eval.split_fraction)
        if len(split.train) == 0 or len(split.test) == 0:
            raise ValueError("not enough data for a train/test split")
        stats["samples"] = {"train": len(split.train), "test": len(split.test)}
    with timer.stage("rank"):
        rcfg = cfg.ranker_config()
        params, losses = train_ranker(split.train, rcfg)
        stats["rank_loss"] = losses
    with timer.stage("eval"):
        scores = predict(split.test, params, rcfg)
        metrics = evaluate(split.test.users, scores, split.test.labels,
                           cfg.eval.baseline_auc, cfg.eval.baseline_gauc)
    return metrics


def _report(cfg: PipelineConfig, metrics: dict, stats: dict, timer: _Timer) -> dict:
    return {"config": cfg.to_dict(), "metrics": metrics, "stats": stats, "timings": timer.timings}


def _walk_stats(walks) -> dict:
    lengths = [len(w) for w in walks]
    return {
        "n_walks": len(walks),
        "discarded": getattr(walks, "discarded", 0),
        "mean_length": float(np.mean(lengths)) if lengths else 0.0,
    }


def run_static(cfg: PipelineConfig) -> dict:
    if cfg.graph.mode != STATIC:
        raise ConfigError("run_static needs graph.mode = static")
    timer, stats = _Timer(), {}
    with timer.stage("corpus"):
        events, meta = load_data(cfg)
        events = filter_min_activity(events, cfg.data.min_activity)
        sequences = build_sequences(events)
        catalog = build_catalog(events, meta)
        stats["corpus"] = _corpus_stats(events, sequences, catalog)
    with timer.stage("graph"):
        g = build_static_graph(sequences)
        stats["graph"] = {"n": g.n, "m": g.n_edges, "total_weight": g.total_weight}
    with timer.stage("walk"):
        walks = static_walks(g, cfg.walk_config())
        stats["walks"] = _walk_stats(walks)
    with timer.stage("embed"):
        M = train_embeddings(walks, cfg.embed_config(), n_vertices=g.n, items=g.items)
        vectors = embed_catalog(M, catalog, aux_token_embeddings(M.vectors(), catalog))
        stats["embed_loss"] = M.loss_history
    metrics = _rank_and_score(cfg, sequences, vectors, catalog, timer, stats)
    return _report(cfg, metrics, stats, timer)


def _corpus_stats(events, sequences, catalog) -> dict:
    return {
        "n_events": len(events),
        "n_users": len(sequences),
        "n_items": len(catalog.items),
        "n_solitary": len(catalog.solitary),
        "n_duplicate_meta": catalog.n_duplicate_meta,
    }


def run_dynamic(cfg: PipelineConfig) -> dict:
    """Temporal pipeline: the graph sees only the earlier events.

    Ranker samples come from the full sequences, so the later part of each
    user's history, whose edges the graph never saw, lands in the test
    split. Items known only through metadata (including items whose events
    were all held out) are embedded from their attribute vectors.
    """
    if cfg.graph.mode != DYNAMIC:
        raise ConfigError("run_dynamic needs graph.mode = dynamic")
    timer, stats = _Timer(), {}
    with timer.stage("corpus"):
        events, meta = load_data(cfg)
        events = filter_min_activity(events, cfg.data.min_activity)
        train_events, held = holdout_dynamic(events, cfg.eval.holdout_fraction)
        train_seqs = build_sequences(train_events)
        catalog = build_catalog(train_events, meta)
        known = catalog.items
        # items seen only in held-out events and absent from metadata cannot be embedded
        kept = [e for e in events if e.item_id in known]
        sequences = build_sequences(kept)
        stats["corpus"] = _corpus_stats(events, sequences, catalog)
        stats["corpus"].update(n_train_events=len(train_events), n_held_out=len(held),
                               n_dropped_unembeddable=len(events) - len(kept))
    with timer.stage("graph"):
        g = build_dynamic_graph(train_seqs)
        src, _, _ = g.instances
        stats["graph"] = {"n": g.n, "m": g.n_edges, "instances": len(src)}
    with timer.stage("walk"):
        count = cfg.walk.count or cfg.walk.per_vertex * g.n
        walks = temporal_walks(g, count, cfg.walk.length, BiasMode(cfg.walk.start_bias),
                               BiasMode(cfg.walk.step_bias), derive_seed(cfg.seed, "walk"),
                               cfg.walk.strict)
        violations = sum(1 for w in walks if any(b < a for a, b in zip(w.times, w.times[1:])))
        stats["walks"] = _walk_stats(walks)
        stats["walks"]["time_order_violations"] = violations
    with timer.stage("embed"):
        M = train_embeddings(walks, cfg.embed_config(), n_vertices=g.n, items=g.items)
        vectors = embed_catalog(M, catalog, aux_token_embeddings(M.vectors(), catalog))
        stats["embed_loss"] = M.loss_history
        stats["solitary_embedded"] = sum(1 for it in catalog.solitary if it in vectors)
    metrics = _rank_and_score(cfg, sequences, vectors, catalog, timer, stats)
    return _report(cfg, metrics, stats, timer)


def run(cfg: PipelineConfig) -> dict:
    return run_static(cfg) if cfg.graph.mode == STATIC else run_dynamic(cfg)


SWEEP_AXES = {"dropout": "rank__dropout", "walk_length": "walk__length"}


def sweep(cfg: PipelineConfig, axis: str, values) -> list[dict]:
    """One full run per value with the shared seed; rows of ``value, auc, gauc``."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    configs = []
    for v in values:
        if axis == "walk_length":
            if float(v) != int(float(v)):
                raise ConfigError(f"walk_length value {v!r} is not an integer")
            v = int(float(v))
        else:
            v = float(v)
        configs.append((v, cfg.replace(**{SWEEP_AXES[axis]: v})))
    rows = []
    for v, c in configs:
        m = run(c)["metrics"]
        rows.append({axis: v, "auc": m["auc"], "gauc": m["gauc"]})
    return rows


def trend_report(rows: list[dict], axis: str, key: str = "gauc") -> dict:
    """Count rises and falls of ``key`` along the sweep (reported, never asserted)."""
    ys = [r[key] for r in rows]
    ups = sum(1 for a, b in zip(ys, ys[1:]) if b > a)
    return {"axis": axis, "metric": key, "rises": ups, "falls": len(ys) - 1 - ups,
            "argmax": rows[int(np.argmax(ys))][axis] if ys else None}


def repeat_and_average(cfg: PipelineConfig, runs: int | None = None, vary_seeds: bool = True) -> dict:
    """Mean and sample std of the metrics over ``runs`` runs.

    With ``vary_seeds`` run ``i`` uses a seed derived from the master seed
    and ``i``; otherwise every run reuses the master seed.
    """
    runs = cfg.runs if runs is None else runs
    if runs < 1:
        raise ConfigError("runs must be >= 1")
    reports = []
    for i in range(runs):
        seed = derive_seed(cfg.seed, "run", i) if vary_seeds else cfg.seed
        reports.append(run(cfg.replace(seed=seed)))
    keys = ("auc", "gauc")
    vals = {k: np.array([r["metrics"][k] for r in reports]) for k in keys}
    return {
        "runs": runs,
        "mean": {k: float(v.mean()) for k, v in vals.items()},
        "std": {k: float(v.std(ddof=1)) if runs > 1 else 0.0 for k, v in vals.items()},
        "reports": reports,
    }


def read_inputs(events_path: str | Path, metadata_path: str | Path | None, fmt: str | None = None):
    with open(events_path, encoding="utf-8") as fh:
        events = parse_events(fh, fmt)
    meta = []
    if metadata_path:
        with open(metadata_path, encoding="utf-8") as fh:
            meta = parse_metadata(fh)
    return events, meta
