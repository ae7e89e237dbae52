"""Event store: construction, time-bounded queries, splits."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chronorec.errors import DataError
from chronorec.graph import (build_graph, chronological_split, neighbors_before,
                             neighbors_before_batch, truncate_latest)

from helpers import make_events, random_event_rows


def graph_of(rows, n_users, n_items, d_e=0, rng=None):
    return build_graph(make_events(rows, d_e=d_e, rng=rng), n_users, n_items, d_e)


class TestBuildGraph:
    def test_adjacency_lengths(self):
        g = graph_of([(0, 0, 1.0), (0, 1, 2.0), (0, 2, 3.0)], 1, 3)
        assert len(g.adj_ids[0]) == 3
        for item in range(3):
            assert len(g.adj_ids[g.item_node(item)]) == 1
        total = sum(len(ids) for ids in g.adj_ids)
        assert total == 2 * len(g.events)

    def test_repeated_pair_retained(self):
        g = graph_of([(0, 0, 1.0), (0, 0, 5.0)], 1, 1)
        assert len(g.adj_ids[0]) == 2
        assert list(g.adj_times[0]) == [1.0, 5.0]

    def test_out_of_order_input_sorted(self):
        g = graph_of([(0, 1, 9.0), (0, 0, 1.0), (0, 2, 4.0)], 1, 3)
        assert list(g.adj_times[0]) == [1.0, 4.0, 9.0]
        assert [e.seq_no for e in g.events] == [0, 1, 2]

    def test_id_out_of_range(self):
        with pytest.raises(DataError):
            graph_of([(0, 5, 1.0)], 1, 3)
        with pytest.raises(DataError):
            graph_of([(2, 0, 1.0)], 1, 3)

    def test_empty_events(self):
        with pytest.raises(DataError):
            build_graph([], 1, 1, 0)


class TestNeighborsBefore:
    def setup_method(self):
        self.g = graph_of([(0, 0, 1.0), (0, 1, 2.0), (0, 2, 3.0)], 1, 3)

    def test_most_recent_strictly_before(self):
        ns = neighbors_before(self.g, 0, 2.5, epsilon=2)
        assert ns.mask.tolist() == [True, True]
        assert ns.node_ids.tolist() == [self.g.item_node(1), self.g.item_node(0)]
        assert ns.times.tolist() == [2.0, 1.0]

    def test_no_predecessors(self):
        ns = neighbors_before(self.g, 0, 0.5, epsilon=2)
        assert not ns.mask.any()
        assert np.all(ns.features == 0.0)

    def test_single_latest(self):
        ns = neighbors_before(self.g, 0, 10.0, epsilon=1)
        assert ns.node_ids.tolist() == [self.g.item_node(2)]
        assert ns.times.tolist() == [3.0]

    def test_unknown_node_is_cold(self):
        ns = neighbors_before(self.g, 99, 5.0, epsilon=2)
        assert not ns.mask.any()

    def test_uniform_seeded_reproducible(self):
        rows = random_event_rows(np.random.default_rng(3), 4, 6, 120)
        g = graph_of(rows, 4, 6)
        a = neighbors_before_batch(g, np.arange(4), np.full(4, 1e9), 3, "uniform",
                                   np.random.default_rng(11))
        b = neighbors_before_batch(g, np.arange(4), np.full(4, 1e9), 3, "uniform",
                                   np.random.default_rng(11))
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_uniform_requires_rng(self):
        with pytest.raises(DataError):
            neighbors_before(self.g, 0, 2.0, 2, strategy="uniform")

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), eps=st.integers(1, 6),
           strategy=st.sampled_from(["most_recent", "uniform"]))
    def test_strictness_property(self, seed, eps, strategy):
        rng = np.random.default_rng(seed)
        rows = random_event_rows(rng, 3, 5, 40)
        g = graph_of(rows, 3, 5)
        node = int(rng.integers(g.n_nodes))
        t = float(rng.uniform(0.0, 50.0))
        ids, times, _f, _s, mask = neighbors_before_batch(
            g, np.array([node]), np.array([t]), eps, strategy, np.random.default_rng(seed))
        assert np.all(times[mask] < t)
        assert mask.sum() <= eps


class TestChronologicalSplit:
    def test_floor_sizes(self):
        events = make_events([(0, 0, float(i)) for i in range(10)])
        a, b, c = chronological_split(events, (0.8, 0.1, 0.1))
        assert (len(a), len(b), len(c)) == (8, 1, 1)

    def test_large_count_arithmetic(self):
        # floor(157474*0.8), floor(157474*0.1), remainder
        n = 157474
        events = make_events([(0, 0, float(i)) for i in range(n)])
        a, b, c = chronological_split(events, (0.8, 0.1, 0.1))
        assert (len(a), len(b), len(c)) == (125979, 15747, 15748)

    def test_five_events(self):
        events = make_events([(0, 0, float(i)) for i in range(5)])
        a, b, c = chronological_split(events, (0.6, 0.2, 0.2))
        assert (len(a), len(b), len(c)) == (3, 1, 1)

    def test_time_ordering_between_parts(self):
        rng = np.random.default_rng(5)
        events = make_events(random_event_rows(rng, 3, 3, 50))
        events = build_graph(events, 3, 3, 0).events
        a, b, c = chronological_split(events, (0.8, 0.1, 0.1))
        assert max(e.timestamp for e in a) <= min(e.timestamp for e in b)
        assert max(e.timestamp for e in b) <= min(e.timestamp for e in c)

    def test_partition_property(self):
        events = make_events([(0, 0, float(i)) for i in range(23)])
        a, b, c = chronological_split(events, (0.5, 0.25, 0.25))
        assert a + b + c == events

    def test_bad_ratios(self):
        events = make_events([(0, 0, float(i)) for i in range(10)])
        with pytest.raises(DataError):
            chronological_split(events, (0.8, 0.1, 0.2))
        with pytest.raises(DataError):
            chronological_split(events, (-0.5, 0.75, 0.75))

    def test_too_few_events(self):
        events = make_events([(0, 0, 0.0), (0, 0, 1.0)])
        with pytest.raises(DataError):
            chronological_split(events, (0.8, 0.1, 0.1))


class TestTruncateLatest:
    def test_quarter(self):
        events = make_events([(0, 0, float(i)) for i in range(8)])
        out = truncate_latest(events, 0.25)
        assert out == events[-2:]

    def test_identity(self):
        events = make_events([(0, 0, float(i)) for i in range(8)])
        assert truncate_latest(events, 1.0) == events

    def test_ceil_arithmetic(self):
        events = make_events([(0, 0, float(i)) for i in range(125979)])
        assert len(truncate_latest(events, 0.5)) == 62990

    def test_bad_proportion(self):
        events = make_events([(0, 0, 0.0)])
        for p in (0.0, -0.1, 1.5):
            with pytest.raises(DataError):
                truncate_latest(events, p)
