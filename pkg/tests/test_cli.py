import csv
import json
import subprocess
import sys

import pytest
import yaml

from dgem.harness.cli import main


@pytest.fixture
def workdir(tmp_path, tiny):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump(tiny))
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "data")]) == 0
    return tmp_path, str(cfg)


def run_cli(*argv):
    return main([str(a) for a in argv])


def test_stage_chain(workdir, capsys):
    d, cfg = workdir
    ev, meta = d / "data" / "events.tsv", d / "data" / "metadata.tsv"
    capsys.readouterr()
    assert run_cli("ingest", "--config", cfg, "--events", ev, "--metadata", meta) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["n_solitary"] == 3 and info["n_skipped"] == 0
    for mode in ("static", "dynamic"):
        g, w, e, m = (d / f"{mode}.{x}" for x in ("graph", "walks", "emb", "model"))
        assert run_cli("build-graph", "--config", cfg, "--events", ev, "--mode", mode, "--out", g) == 0
        assert run_cli("walk", "--config", cfg, "--graph", g, "--out", w) == 0
        assert run_cli("embed", "--config", cfg, "--walks", w, "--events", ev, "--metadata", meta,
                       "--out", e) == 0
        assert run_cli("train", "--config", cfg, "--events", ev, "--metadata", meta,
                       "--embeddings", e, "--out", m) == 0
        capsys.readouterr()
        assert run_cli("eval", "--config", cfg, "--events", ev, "--metadata", meta,
                       "--embeddings", e, "--model", m) == 0
        report = json.loads(capsys.readouterr().out)
        assert 0 <= report["auc"] <= 1 and "gauc" in report
        assert g.read_text().startswith(f"DGEM-GRAPH v1 {mode}")
        first = w.read_text().splitlines()[0]
        assert ("|" in first) == (mode == "dynamic")
        assert m.read_text().startswith("DGEM-RANKER v1")


def test_run_static_writes_report_and_figure(workdir):
    d, cfg = workdir
    out = d / "static.json"
    assert run_cli("run-static", "--config", cfg, "--out", out) == 0
    report = json.loads(out.read_text())
    assert set(report) == {"config", "metrics", "stats", "timings"}
    png = d / "static.loss.png"
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_run_dynamic_csv(workdir):
    d, cfg = workdir
    out = d / "dyn.csv"
    assert run_cli("run-dynamic", "--config", cfg, "--format", "csv", "--out", out) == 0
    (row,) = list(csv.DictReader(out.open()))
    assert row["stats.walks.time_order_violations"] == "0"
    assert float(row["metrics.auc"]) > 0


def test_run_static_repeated(workdir, capsys):
    _, cfg = workdir
    assert run_cli("run-static", "--config", cfg, "--runs", 2) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["runs"] == 2 and set(out["mean"]) == {"auc", "gauc"}


def test_sweep_table_and_plot(workdir):
    d, cfg = workdir
    out = d / "sweep.csv"
    assert run_cli("sweep", "--config", cfg, "--axis", "walk_length", "--values", "2,4,6",
                   "--format", "csv", "--out", out) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["walk_length"] for r in rows] == ["2", "4", "6"]
    assert (d / "sweep.png").exists()


def test_seeded_outputs_byte_identical(workdir):
    d, cfg = workdir
    a, b = d / "a.graph", d / "b.graph"
    ev = d / "data" / "events.tsv"
    for p in (a, b):
        assert run_cli("build-graph", "--config", cfg, "--events", ev, "--seed", 5, "--out", p) == 0
    wa, wb = d / "a.walks", d / "b.walks"
    for g, w in ((a, wa), (b, wb)):
        assert run_cli("walk", "--config", cfg, "--graph", g, "--seed", 5, "--out", w) == 0
    assert a.read_bytes() == b.read_bytes() and wa.read_bytes() == wb.read_bytes()


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("walk:\n  length: 1\n")
    assert run_cli("run-static", "--config", bad) == 2
    bad.write_text("walk: {colour: red}\n")
    assert run_cli("run-static", "--config", bad) == 2
    assert run_cli("walk", "--graph", tmp_path / "nope.graph") == 1
    assert run_cli("sweep", "--axis", "dropout", "--values", "a,b") == 2
    with pytest.raises(SystemExit) as exc:
        run_cli("frobnicate")
    assert exc.value.code == 2
    assert "dgem" in capsys.readouterr().err


def test_ingest_skip_policy(tmp_path, capsys):
    ev = tmp_path / "ev.tsv"
    ev.write_text("u1\ti1\t1\nbroken\nu1\ti2\t2\n")
    assert run_cli("ingest", "--events", ev) == 1
    capsys.readouterr()
    assert run_cli("ingest", "--events", ev, "--on-error", "skip") == 0
    info = json.loads(capsys.readouterr().out)
    assert info["n_parsed"] == 2 and info["n_skipped"] == 1


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "dgem", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "run-static" in res.stdout
