"""``dgem`` command line.

Every stage reads and writes files so it can be run on its own; ``run-static``,
``run-dynamic`` and ``sweep`` drive the whole pipeline from a config file.
Exit status: 0 success, 2 invalid configuration, 1 any other failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from dgem.corpus import (Catalog, build_catalog, build_sequences, filter_min_activity,
                         parse_events, parse_metadata, write_events, write_metadata)
from dgem.embedder import (aggregate_cold_start, aux_token_embeddings, embed_catalog,
                           read_embeddings, train_embeddings, write_embeddings, ColdStartInput)
from dgem.graph import DYNAMIC, build_dynamic_graph, build_static_graph, read_graph, write_graph
from dgem.harness import pipeline
from dgem.harness.config import ConfigError, PipelineConfig, derive_seed, load_config
from dgem.harness.plotting import plot_losses, plot_sweep
from dgem.harness.synth import synth_dataset
from dgem.metrics import evaluate
from dgem.ranker import (build_training_samples, load_checkpoint, predict, save_checkpoint,
                         train_ranker)
from dgem.walker import BiasMode, read_walks, static_walks, temporal_walks, write_walks

log = logging.getLogger("dgem")


# Output helpers


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, (list, tuple)):
            out[key] = " ".join(str(x) for x in v)
        else:
            out[key] = v
    return out


def render(obj, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"
    rows = obj if isinstance(obj, list) else [_flatten(obj)]
    buf = io.StringIO()
    if rows:
        fields = list(rows[0])
        for r in rows[1:]:
            fields += [k for k in r if k not in fields]
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def emit(obj, args, path: str | None = None) -> None:
    text = render(obj, args.format)
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _open_out(path: str | None):
    if path is None:
        raise ConfigError("--out is required for this subcommand")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", encoding="utf-8")


# Input helpers


def _events_path(args, cfg: PipelineConfig) -> str:
    path = getattr(args, "events", None) or cfg.io.events
    if not path:
        raise ConfigError("no events file: pass --events or set io.events")
    return path


def _metadata_path(args, cfg: PipelineConfig) -> str | None:
    return getattr(args, "metadata", None) or cfg.io.metadata


def _load_events(args, cfg: PipelineConfig, errors=None):
    with open(_events_path(args, cfg), encoding="utf-8") as fh:
        events = parse_events(fh, getattr(args, "input_format", None) or cfg.data.format,
                              on_error=getattr(args, "on_error", "abort"), errors=errors)
    meta = []
    mpath = _metadata_path(args, cfg)
    if mpath:
        with open(mpath, encoding="utf-8") as fh:
            meta = parse_metadata(fh)
    return events, meta


def _prepared(args, cfg: PipelineConfig):
    events, meta = _load_events(args, cfg)
    events = filter_min_activity(events, cfg.data.min_activity)
    return events, meta, build_sequences(events), build_catalog(events, meta)


def fill_missing_vectors(vectors: dict, catalog: Catalog) -> dict:
    """Give catalog items without a vector the mean of their attribute vectors."""
    aux = aux_token_embeddings(vectors, catalog)
    out = dict(vectors)
    for item in sorted(catalog.items):
        if item in out:
            continue
        known = [aux[t] for t in catalog.aux_info.get(item, ()) if t in aux]
        if not known:
            raise ValueError(f"item {item!r} has no vector and no known auxiliary tokens")
        out[item] = aggregate_cold_start(ColdStartInput(None, known))
    return out


def _split(cfg: PipelineConfig, sequences, vectors, catalog):
    rng = np.random.default_rng(derive_seed(cfg.seed, "samples"))
    return build_training_samples(sequences, vectors, catalog, cfg.eval.neg_ratio,
                                  cfg.rank.max_history, rng, cfg.eval.split_fraction)


# Subcommands


def cmd_synth(args, cfg: PipelineConfig) -> None:
    if not args.out:
        raise ConfigError("--out DIR is required")
    s = cfg.data.synth
    events, meta = synth_dataset(s.n_users, s.n_items, s.n_clusters, s.events_per_user, s.noise,
                                 derive_seed(cfg.seed, "synth"), s.n_solitary)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "events.tsv", "w", encoding="utf-8") as fh:
        write_events(events, fh)
    with open(out / "metadata.tsv", "w", encoding="utf-8") as fh:
        write_metadata(meta, fh)
    emit({"events": str(out / "events.tsv"), "metadata": str(out / "metadata.tsv"),
          "n_events": len(events), "n_meta": len(meta)}, args)


def cmd_ingest(args, cfg: PipelineConfig) -> None:
    errors: list = []
    events, meta = _load_events(args, cfg, errors)
    n_parsed = len(events)
    events = filter_min_activity(events, cfg.data.min_activity)
    seqs = build_sequences(events)
    catalog = build_catalog(events, meta)
    if args.out:
        with _open_out(args.out) as fh:
            write_events(events, fh)
    for e in errors[:20]:
        log.warning("skipped %s", e)
    emit({"n_parsed": n_parsed, "n_skipped": len(errors), "n_events": len(events),
          "n_users": len(seqs), "n_items": len(catalog.items), "n_solitary": len(catalog.solitary),
          "n_duplicate_meta": catalog.n_duplicate_meta}, args)


def cmd_build_graph(args, cfg: PipelineConfig) -> None:
    _, _, seqs, _ = _prepared(args, cfg)
    mode = args.mode or cfg.graph.mode
    g = build_dynamic_graph(seqs) if mode == DYNAMIC else build_static_graph(seqs)
    with _open_out(args.out) as fh:
        write_graph(g, fh)
    emit({"mode": g.mode, "n": g.n, "m": g.n_edges, "total_weight": g.total_weight}, args)


def cmd_walk(args, cfg: PipelineConfig) -> None:
    with open(args.graph, encoding="utf-8") as fh:
        g = read_graph(fh)
    if g.mode == DYNAMIC:
        count = cfg.walk.count or cfg.walk.per_vertex * g.n
        walks = temporal_walks(g, count, cfg.walk.length, BiasMode(cfg.walk.start_bias),
                               BiasMode(cfg.walk.step_bias), derive_seed(cfg.seed, "walk"),
                               cfg.walk.strict)
    else:
        walks = static_walks(g, cfg.walk_config())
    with _open_out(args.out) as fh:
        write_walks(walks, g.items, fh)
    emit({"mode": g.mode, "n_walks": len(walks), "discarded": walks.discarded}, args)


def cmd_embed(args, cfg: PipelineConfig) -> None:
    with open(args.walks, encoding="utf-8") as fh:
        items, walks = read_walks(fh)
    M = train_embeddings(walks, cfg.embed_config(), n_vertices=len(items), items=items)
    vectors = M.vectors()
    if getattr(args, "events", None) or cfg.io.events:
        _, _, _, catalog = _prepared(args, cfg)
        # interacted items the walks never reached are treated like solitary ones
        missing = {it for it in catalog.items - catalog.solitary if it not in vectors}
        cat = Catalog(catalog.items, catalog.aux_info, catalog.solitary | missing)
        vectors = embed_catalog(vectors, cat, aux_token_embeddings(vectors, catalog))
    with _open_out(args.out) as fh:
        write_embeddings(vectors, fh)
    emit({"n_vectors": len(vectors), "dim": M.dim, "loss": M.loss_history}, args)


def _load_vectors(args, catalog):
    with open(args.embeddings, encoding="utf-8") as fh:
        return fill_missing_vectors(read_embeddings(fh), catalog)


def cmd_train(args, cfg: PipelineConfig) -> None:
    _, _, seqs, catalog = _prepared(args, cfg)
    split = _split(cfg, seqs, _load_vectors(args, catalog), catalog)
    rcfg = cfg.ranker_config()
    params, losses = train_ranker(split.train, rcfg)
    with _open_out(args.out) as fh:
        save_checkpoint(params, rcfg, fh)
    emit({"n_train": len(split.train), "n_test": len(split.test), "loss": losses}, args)


def cmd_eval(args, cfg: PipelineConfig) -> None:
    _, _, seqs, catalog = _prepared(args, cfg)
    split = _split(cfg, seqs, _load_vectors(args, catalog), catalog)
    with open(args.model, encoding="utf-8") as fh:
        params, rcfg = load_checkpoint(fh)
    scores = predict(split.test, params, rcfg)
    report = evaluate(split.test.users, scores, split.test.labels,
                      cfg.eval.baseline_auc, cfg.eval.baseline_gauc)
    emit(report, args, args.out)


def _run(args, cfg: PipelineConfig, mode: str) -> None:
    cfg = cfg.replace(graph__mode=mode)
    if args.runs:
        result = pipeline.repeat_and_average(cfg, args.runs)
        emit({k: result[k] for k in ("runs", "mean", "std")}, args, args.out)
        return
    report = pipeline.run(cfg)
    emit(report, args, args.out)
    if args.out:
        plot_losses(report, Path(args.out).with_suffix(".loss.png"))


def cmd_run_static(args, cfg):
    _run(args, cfg, "static")


def cmd_run_dynamic(args, cfg):
    _run(args, cfg, "dynamic")


def cmd_sweep(args, cfg: PipelineConfig) -> None:
    values = [v for v in args.values.split(",") if v.strip()]
    try:
        values = [float(v) for v in values]
    except ValueError:
        raise ConfigError(f"sweep values must be numbers: {args.values!r}") from None
    if args.mode:
        cfg = cfg.replace(graph__mode=args.mode)
    rows = pipeline.sweep(cfg, args.axis, values)
    emit(rows, args, args.out)
    if args.out:
        plot_sweep(rows, args.axis, Path(args.out).with_suffix(".png"))
    log.info("trend: %s", pipeline.trend_report(rows, args.axis))


COMMANDS = {
    "synth": (cmd_synth, "write a synthetic events/metadata pair"),
    "ingest": (cmd_ingest, "parse and filter an event file"),
    "build-graph": (cmd_build_graph, "build a static or dynamic item graph"),
    "walk": (cmd_walk, "generate a walk corpus from a graph file"),
    "embed": (cmd_embed, "train item embeddings on a walk corpus"),
    "train": (cmd_train, "train the ranker on events + embeddings"),
    "eval": (cmd_eval, "score the held-out split with a trained ranker"),
    "run-static": (cmd_run_static, "full static pipeline"),
    "run-dynamic": (cmd_run_dynamic, "full dynamic pipeline"),
    "sweep": (cmd_sweep, "repeat the pipeline over dropout or walk length values"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON config file")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--out", help="primary output path")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dgem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = {}
    for name, (_, help_) in COMMANDS.items():
        p[name] = sub.add_parser(name, parents=[common], help=help_)
    for name in ("ingest", "build-graph", "embed", "train", "eval"):
        p[name].add_argument("--events")
        p[name].add_argument("--metadata")
        p[name].add_argument("--input-format", choices=("tsv", "csv", "json"))
    p["ingest"].add_argument("--on-error", choices=("abort", "skip"), default="abort")
    p["build-graph"].add_argument("--mode", choices=("static", "dynamic"))
    p["walk"].add_argument("--graph", required=True)
    p["embed"].add_argument("--walks", required=True)
    for name in ("train", "eval"):
        p[name].add_argument("--embeddings", required=True)
    p["eval"].add_argument("--model", required=True)
    for name in ("run-static", "run-dynamic"):
        p[name].add_argument("--runs", type=int, help="repeat with derived seeds and report mean/std")
    p["sweep"].add_argument("--axis", choices=sorted(pipeline.SWEEP_AXES), required=True)
    p["sweep"].add_argument("--values", required=True, help="comma-separated values")
    p["sweep"].add_argument("--mode", choices=("static", "dynamic"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        if getattr(args, "runs", None) is not None and args.runs < 1:
            raise ConfigError("--runs must be >= 1")
        COMMANDS[args.command][0](args, cfg)
    except ConfigError as exc:
        print(f"dgem: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"dgem: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
