import io
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dgem.corpus import UserSequence
from dgem.graph import (DYNAMIC, STATIC, EdgeRecord, build_dynamic_graph, build_static_graph,
                        graph_from_edges, out_edges, read_graph, total_out_weight, write_graph)

GOLDEN_EDGES = {
    ("A", "C"): 1, ("A", "D"): 1, ("B", "C"): 1, ("B", "F"): 1, ("C", "D"): 1,
    ("C", "E"): 2, ("D", "F"): 1, ("E", "F"): 1, ("F", "C"): 1, ("F", "E"): 1,
}


def seq(user, *pairs):
    return UserSequence(user, list(pairs))


class TestStatic:
    def test_golden_edges(self, four_users):
        g = build_static_graph(four_users)
        assert {k: wf for k, (wf, _) in g.edge_map().items()} == GOLDEN_EDGES
        assert g.mode == STATIC

    def test_empty(self):
        g = build_static_graph([])
        assert g.n == 0 and g.n_edges == 0

    def test_back_and_forth(self):
        g = build_static_graph([seq("u", ("A", 1), ("B", 2), ("A", 3))])
        assert {k: wf for k, (wf, _) in g.edge_map().items()} == {("A", "B"): 1, ("B", "A"): 1}

    def test_self_loop(self):
        g = build_static_graph([seq("u", ("A", 1), ("A", 2))])
        assert g.edge_map() == {("A", "A"): (1, ())}

    def test_short_sequences_add_vertices_only(self):
        g = build_static_graph([seq("u", ("A", 1))], items=["Z"])
        assert g.items == ("A", "Z") and g.n_edges == 0


class TestDynamic:
    def test_golden_dynamic(self, four_users):
        g = build_dynamic_graph(four_users)
        wf, wt = g.edge_map()[("C", "E")]
        assert wf == 2 and len(wt) == 2
        assert ("E", "F") in g.edge_map() and ("F", "E") in g.edge_map()

    def test_single_pair(self):
        g = build_dynamic_graph([seq("u", ("A", 10), ("B", 20))])
        assert g.edge_map() == {("A", "B"): (1, (20,))}

    def test_repeated_pair(self):
        g = build_dynamic_graph([seq("u", ("A", 10), ("B", 20), ("A", 30), ("B", 40))])
        assert g.edge_map() == {("A", "B"): (2, (20, 40)), ("B", "A"): (1, (30,))}

    def test_times_sorted_across_users(self):
        g = build_dynamic_graph([seq("u1", ("A", 50), ("B", 60)), seq("u2", ("A", 1), ("B", 2))])
        assert g.edge_map()[("A", "B")] == (2, (2, 60))


class TestAccess:
    def test_out_edges_golden(self, four_users):
        g = build_static_graph(four_users)
        c = g.index["C"]
        assert {g.items[e.dst]: e.wf for e in out_edges(g, c)} == {"E": 2, "D": 1}

    def test_sink(self):
        g = build_static_graph([seq("u", ("A", 1), ("B", 2))])
        b = g.index["B"]
        assert out_edges(g, b) == ()
        assert total_out_weight(g, b) == 0

    def test_out_of_range(self, four_users):
        g = build_static_graph(four_users)
        with pytest.raises(IndexError):
            out_edges(g, g.n)
        with pytest.raises(IndexError):
            total_out_weight(g, -1)

    def test_total_out_weight(self, four_users):
        g = build_static_graph(four_users)
        assert total_out_weight(g, g.index["C"]) == 3
        assert total_out_weight(g, g.index["A"]) == 2

    def test_adjacency_sorted_by_dst(self, four_users):
        g = build_static_graph(four_users)
        for row in g.adj:
            assert [e.dst for e in row] == sorted(e.dst for e in row)


def test_graph_from_edges_validation():
    with pytest.raises(ValueError):
        graph_from_edges(STATIC, [("A", "B", 0)])
    with pytest.raises(ValueError):
        graph_from_edges(DYNAMIC, [("A", "B", [])])
    g = graph_from_edges(DYNAMIC, [("A", "B", [3.5, 1.0])])
    assert g.adj[0] == (EdgeRecord(1, 2, (1.0, 3.5)),)


sequences_strategy = st.lists(
    st.lists(st.tuples(st.sampled_from(list("ABCDEF")), st.integers(0, 50)), min_size=1, max_size=8),
    max_size=8,
)


def _as_sequences(raw):
    return [UserSequence(f"u{i}", sorted(items, key=lambda p: p[1])) for i, items in enumerate(raw)]


@settings(max_examples=60)
@given(sequences_strategy, st.randoms(use_true_random=False))
def test_graph_invariants(raw, rnd):
    seqs = _as_sequences(raw)
    for build in (build_static_graph, build_dynamic_graph):
        g = build(seqs)
        assert g.total_weight == sum(max(0, len(s) - 1) for s in seqs)
        shuffled = list(seqs)
        rnd.shuffle(shuffled)
        assert build(shuffled) == g
        buf = io.StringIO()
        write_graph(g, buf)
        assert read_graph(io.StringIO(buf.getvalue())) == g
        if g.mode == DYNAMIC:
            for _, e in g.edges():
                assert len(e.wt) == e.wf and list(e.wt) == sorted(e.wt)


def test_file_format(four_users):
    g = build_dynamic_graph(four_users)
    buf = io.StringIO()
    write_graph(g, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == f"DGEM-GRAPH v1 dynamic {g.n} {g.n_edges}"
    edge_lines = [ln for ln in lines[1:] if not ln.startswith("#")]
    assert len(edge_lines) == g.n_edges
    src, dst, wf, times = next(ln for ln in edge_lines if ln.startswith("C\tE")).split("\t")
    assert wf == "2" and len(times.split(",")) == 2


def test_reader_accepts_edge_only_files():
    text = "DGEM-GRAPH v1 static 3 2\n# made by hand\nA\tB\t2\nB\tC\t1\n"
    g = read_graph(io.StringIO(text))
    assert g.edge_map() == {("A", "B"): (2, ()), ("B", "C"): (1, ())}


def test_reader_rejects_bad_header():
    with pytest.raises(ValueError):
        read_graph(io.StringIO("GRAPH 1\n"))
    with pytest.raises(ValueError):
        read_graph(io.StringIO("DGEM-GRAPH v1 static 2 5\nA\tB\t1\n"))


def test_float_times_roundtrip():
    g = graph_from_edges(DYNAMIC, [("A", "B", [0.1, 2.0]), ("B", "C", [random.Random(1).random()])])
    buf = io.StringIO()
    write_graph(g, buf)
    assert read_graph(io.StringIO(buf.getvalue())) == g
