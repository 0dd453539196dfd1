import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dgem.graph import DYNAMIC, STATIC, build_dynamic_graph, build_static_graph, graph_from_edges
from dgem.walker import (TERMINAL, AliasTable, BiasMode, StaticWalkConfig, TemporalEdgeInstance,
                         TransitionSampler, enumerate_temporal_walks, next_edge_distribution,
                         read_walks, start_edge_distribution, static_walks, temporal_next,
                         temporal_walks, transition_distribution, write_walks)


def labelled(g, dist):
    return {g.items[k]: v for k, v in dist.items()}


class TestTransitions:
    def test_golden_vertex_c(self, four_users):
        g = build_static_graph(four_users)
        d = labelled(g, transition_distribution(g, g.index["C"], 1.0))
        assert d == pytest.approx({"E": 2 / 3, "D": 1 / 3}, abs=1e-12)

    def test_alpha_zero_stays(self, four_users):
        g = build_static_graph(four_users)
        c = g.index["C"]
        assert transition_distribution(g, c, 0.0) == {c: 1.0}

    def test_alpha_mix(self, four_users):
        g = build_static_graph(four_users)
        d = labelled(g, transition_distribution(g, g.index["C"], 0.4))
        assert d == pytest.approx({"C": 0.6, "E": 0.4 * 2 / 3, "D": 0.4 / 3}, abs=1e-12)

    def test_sink_absorbs(self):
        g = graph_from_edges(STATIC, [("A", "B", 1)])
        assert transition_distribution(g, g.index["B"], 0.7) == {g.index["B"]: 1.0}

    def test_self_loop_folds_into_stay(self):
        g = graph_from_edges(STATIC, [("A", "A", 1), ("A", "B", 1)])
        d = labelled(g, transition_distribution(g, 0, 0.5))
        assert d == pytest.approx({"A": 0.75, "B": 0.25})


class TestStaticWalks:
    def test_single_edge(self):
        g = graph_from_edges(STATIC, [("A", "B", 1)])
        walks = static_walks(g, StaticWalkConfig(walk_length=5, walks_per_vertex=3, seed=1))
        assert [w.vertices for w in walks] == [(0, 1)] * 3
        assert walks.discarded == 3  # every walk started at the sink

    def test_deterministic(self, four_users):
        g = build_static_graph(four_users)
        cfg = StaticWalkConfig(walk_length=8, walks_per_vertex=4, seed=9)
        a, b = static_walks(g, cfg), static_walks(g, cfg)
        assert [w.vertices for w in a] == [w.vertices for w in b]
        c = static_walks(g, StaticWalkConfig(walk_length=8, walks_per_vertex=4, seed=10))
        assert [w.vertices for w in a] != [w.vertices for w in c]

    def test_lengths_and_edges(self, four_users):
        g = build_static_graph(four_users)
        walks = static_walks(g, StaticWalkConfig(walk_length=6, walks_per_vertex=5))
        for w in walks:
            assert 2 <= len(w) <= 6
            for a, b in zip(w.vertices, w.vertices[1:]):
                assert g.has_edge(a, b)

    def test_alpha_zero_repeats_start(self, four_users):
        g = build_static_graph(four_users)
        walks = static_walks(g, StaticWalkConfig(walk_length=4, walks_per_vertex=1, alpha=0.0))
        for w in walks:
            assert len(set(w.vertices)) == 1 and len(w) == 4

    def test_config_validation(self):
        with pytest.raises(ValueError):
            StaticWalkConfig(walk_length=1)
        with pytest.raises(ValueError):
            StaticWalkConfig(alpha=1.5)

    def test_empirical_frequencies(self, four_users):
        g = build_static_graph(four_users)
        sampler = TransitionSampler(g, 0.8)
        rng = np.random.default_rng(3)
        n = 100_000
        for v in range(g.n):
            draws = sampler.sample_many(v, rng, n)
            for dst, p in transition_distribution(g, v, 0.8).items():
                freq = np.mean(draws == dst)
                se = math.sqrt(p * (1 - p) / n)
                assert abs(freq - p) <= 3 * se + 1e-12


def test_alias_table_exact():
    t = AliasTable([1, 2, 3, 4])
    np.testing.assert_allclose(t.probabilities, [0.1, 0.2, 0.3, 0.4])
    # implied probabilities of the alias construction reproduce the weights
    implied = np.zeros(4)
    for i in range(4):
        implied[i] += t.prob[i] / 4
        implied[t.alias[i]] += (1 - t.prob[i]) / 4
    np.testing.assert_allclose(implied, t.probabilities, atol=1e-12)
    with pytest.raises(ValueError):
        AliasTable([0, 0])


def two_edge(t1, t2):
    return graph_from_edges(DYNAMIC, [("A", "B", [t1]), ("B", "C", [t2])])


class TestTemporal:
    def test_chain_continues(self):
        g = two_edge(10, 20)
        cur = TemporalEdgeInstance(0, 1, 10)
        assert temporal_next(g, cur, BiasMode.UNIFORM, np.random.default_rng(0)) == (1, 2, 20)
        law = enumerate_temporal_walks(g, 5)
        assert law[((0, 1, 2), (10, 20))] == pytest.approx(0.5)
        assert law[((1, 2), (20,))] == pytest.approx(0.5)

    def test_chain_blocked_by_time(self):
        g = two_edge(10, 5)
        cur = TemporalEdgeInstance(0, 1, 10)
        assert temporal_next(g, cur, BiasMode.UNIFORM, np.random.default_rng(0)) is TERMINAL
        law = enumerate_temporal_walks(g, 5)
        assert law == pytest.approx({((0, 1), (10,)): 0.5, ((1, 2), (5,)): 0.5})

    def test_equal_times_allowed_unless_strict(self):
        g = two_edge(10, 10)
        cur = TemporalEdgeInstance(0, 1, 10)
        assert len(next_edge_distribution(g, cur)[0]) == 1
        assert next_edge_distribution(g, cur, strict=True)[0] == []

    def test_exponential_two_candidates(self):
        g = graph_from_edges(DYNAMIC, [("A", "B", [0.0]), ("A", "C", [math.log(2)])])
        _, p = start_edge_distribution(g, BiasMode.EXPONENTIAL)
        np.testing.assert_allclose(p, [1 / 3, 2 / 3], atol=1e-12)
        g = graph_from_edges(DYNAMIC, [("A", "B", [0.0]), ("A", "C", [math.log(3)])])
        _, p = start_edge_distribution(g, BiasMode.EXPONENTIAL)
        np.testing.assert_allclose(p, [1 / 4, 3 / 4], atol=1e-12)

    def test_exponential_large_clock_finite(self):
        g = graph_from_edges(DYNAMIC, [("A", "B", [1.4e9]), ("A", "C", [1.4e9 + 1])])
        _, p = start_edge_distribution(g, BiasMode.EXPONENTIAL)
        np.testing.assert_allclose(p, [1 / (1 + math.e), math.e / (1 + math.e)])

    def test_linear_and_uniform(self):
        g = graph_from_edges(DYNAMIC, [("A", "B", [5, 9]), ("A", "C", [7])])
        insts, p = start_edge_distribution(g, BiasMode.LINEAR)
        assert [i.t for i in insts] == [5, 7, 9]
        np.testing.assert_allclose(p, [1 / 6, 2 / 6, 3 / 6])
        _, p = start_edge_distribution(g, BiasMode.UNIFORM)
        np.testing.assert_allclose(p, [1 / 3] * 3)

    def test_needs_dynamic_graph(self, four_users):
        with pytest.raises(ValueError):
            temporal_walks(build_static_graph(four_users), 3)

    def test_four_user_walks_valid_and_deterministic(self, four_users):
        g = build_dynamic_graph(four_users)
        a = temporal_walks(g, 200, max_length=6, seed=4)
        b = temporal_walks(g, 200, max_length=6, seed=4)
        assert [(w.vertices, w.times) for w in a] == [(w.vertices, w.times) for w in b]
        for w in a:
            assert list(w.times) == sorted(w.times)
            assert 2 <= len(w) <= 6

    def test_law_sums_to_one(self, four_users):
        g = build_dynamic_graph(four_users)
        for mode in BiasMode:
            law = enumerate_temporal_walks(g, 5, mode, mode)
            assert sum(law.values()) == pytest.approx(1.0, abs=1e-12)

    def test_sampler_matches_law(self, four_users):
        g = build_dynamic_graph(four_users)
        law = enumerate_temporal_walks(g, 4, BiasMode.LINEAR, BiasMode.EXPONENTIAL)
        n = 20_000
        walks = temporal_walks(g, n, 4, BiasMode.LINEAR, BiasMode.EXPONENTIAL, seed=2)
        counts: dict = {}
        for w in walks:
            key = (w.vertices, w.times)
            counts[key] = counts.get(key, 0) + 1
        assert set(counts) <= set(law)
        for key, p in law.items():
            se = math.sqrt(p * (1 - p) / n)
            assert abs(counts.get(key, 0) / n - p) <= 4 * se + 1e-9


def test_walk_file_roundtrip(four_users):
    g = build_dynamic_graph(four_users)
    walks = temporal_walks(g, 30, max_length=5, seed=1)
    buf = io.StringIO()
    write_walks(walks, g.items, buf)
    items, back = read_walks(io.StringIO(buf.getvalue()))
    assert [tuple(items[v] for v in w.vertices) for w in back] == \
        [tuple(g.items[v] for v in w.vertices) for w in walks]
    assert [w.times for w in back] == [w.times for w in walks]


dyn_edges = st.lists(
    st.tuples(st.sampled_from("ABCDE"), st.sampled_from("ABCDE"),
              st.lists(st.integers(0, 30), min_size=1, max_size=3)),
    min_size=1, max_size=8,
).map(lambda rows: list({(s, d): (s, d, t) for s, d, t in rows}.values()))


@settings(max_examples=40, deadline=None)
@given(dyn_edges, st.integers(0, 2**31), st.sampled_from(list(BiasMode)))
def test_temporal_walks_in_static_graph(edges, seed, mode):
    g = graph_from_edges(DYNAMIC, edges)
    sg = g.as_static()
    for w in temporal_walks(g, 30, max_length=6, start_mode=mode, step_mode=mode, seed=seed):
        assert list(w.times) == sorted(w.times)
        for a, b in zip(w.vertices, w.vertices[1:]):
            assert sg.has_edge(a, b)
