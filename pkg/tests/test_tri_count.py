#!/usr/bin/env python3
"""
Tests for the triangle counting kernels
"""

import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.errors import DomainError
from src.graph_core import (
    GraphParams,
    complete_graph,
    edges,
    empty_graph,
    from_edges,
    sample_batch,
    sample_gnp,
)
from src import tri_count
from src.tri_count import (
    PartitionedCounts,
    count_partitioned,
    count_triangles,
    count_triangles_batch,
    count_triangles_naive,
    normalize_count,
    triangle_count_stream,
)
from tests.test_helper import random_graph, triple_loop_partition


class TestCountTriangles:
    """Test the word-parallel triangle count"""

    def test_complete_graph(self, k4):
        """Test that K4 has C(4,3) triangles"""
        assert count_triangles(k4) == 4

    def test_five_cycle(self, c5):
        """Test that the 5-cycle has no triangles"""
        assert count_triangles(c5) == 0

    def test_random_graph_matches_naive(self, random64):
        """Test the kernel against the triple loop on a 64-vertex graph"""
        assert count_triangles(random64) == count_triangles_naive(random64)

    def test_large_complete_graph(self):
        """Test a multi-word complete graph"""
        assert count_triangles(complete_graph(130)) == math.comb(130, 3)

    def test_tiny_graphs(self):
        """Test graphs with fewer than three vertices"""
        assert count_triangles(empty_graph(1)) == 0
        assert count_triangles(complete_graph(2)) == 0

    @settings(max_examples=300, deadline=None)
    @given(n=st.integers(min_value=3, max_value=64),
           p=st.floats(min_value=0.05, max_value=0.95),
           seed=st.integers(min_value=0, max_value=2**32 - 1))
    def test_kernel_equivalence(self, n, p, seed):
        """Test that the packed count equals the triple loop for n <= 64"""
        graph = random_graph(n, p, np.random.default_rng(seed))
        assert count_triangles(graph) == count_triangles_naive(graph)

    @settings(max_examples=100, deadline=None)
    @given(n=st.integers(min_value=3, max_value=30),
           seed=st.integers(min_value=0, max_value=2**32 - 1))
    def test_adding_an_edge_never_decreases(self, n, seed):
        """Test monotonicity of the count under edge insertion"""
        rng = np.random.default_rng(seed)
        graph = random_graph(n, 0.5, rng)
        present = set(edges(graph))
        missing = [pair for pair in combinations(range(n), 2) if pair not in present]
        if not missing:
            return
        extra = missing[int(rng.integers(len(missing)))]
        bigger = from_edges(n, sorted(present) + [extra])
        assert count_triangles(bigger) >= count_triangles(graph)

    def test_batch_matches_single(self):
        """Test that the batched kernel agrees with per-graph counts"""
        params = GraphParams(n=40, p=0.5, seed=3)
        counts = count_triangles_batch(sample_batch(params, 0, 12))
        assert counts.tolist() == [count_triangles(sample_gnp(params.at(i))) for i in range(12)]

    @pytest.mark.parametrize("cap", [1, 1000])
    def test_pair_blocks_do_not_change_counts(self, monkeypatch, cap):
        """Test that gathering pairs in small blocks keeps every count"""
        rows = sample_batch(GraphParams(n=70, p=0.5, seed=4), 0, 6)
        expected = count_triangles_batch(rows).tolist()
        monkeypatch.setattr(tri_count, "PAIR_BLOCK_BYTES", cap)
        assert count_triangles_batch(rows).tolist() == expected

    def test_gathered_blocks_stay_under_the_cap(self, monkeypatch):
        """Test that no gathered pair block exceeds PAIR_BLOCK_BYTES"""
        rows = sample_batch(GraphParams(n=200, p=0.5, seed=8), 0, 8)
        expected = count_triangles_batch(rows).tolist()
        cap = 1 << 20
        sizes = []
        popcount = np.bitwise_count

        def recording(x):
            sizes.append(x.nbytes)
            return popcount(x)

        monkeypatch.setattr(tri_count, "PAIR_BLOCK_BYTES", cap)
        monkeypatch.setattr(np, "bitwise_count", recording)
        counts = count_triangles_batch(rows).tolist()
        monkeypatch.undo()
        # all C(200,2) pairs gathered at once would take about 5 MB
        assert len(sizes) > 1
        assert max(sizes) <= cap
        assert counts == expected


class TestCountPartitioned:
    """Test triangle classification by special edges"""

    def test_no_special_edges(self, random64):
        """Test that an empty special set puts every triangle in c0"""
        s = count_triangles(random64)
        assert count_partitioned(random64, []) == PartitionedCounts(c0=s)

    def test_all_special_edges(self, random64):
        """Test that the full special set puts every triangle in c3"""
        s = count_triangles(random64)
        assert count_partitioned(random64, complete_graph(64)) == PartitionedCounts(c3=s)

    def test_one_perfect_matching(self):
        """Test a perfect matching on 8 vertices against the triple loop"""
        matching = [(0, 4), (1, 5), (2, 6), (3, 7)]
        for index in range(20):
            graph = sample_gnp(GraphParams(n=8, p=0.6, seed=21, sample_index=index))
            parts = count_partitioned(graph, matching)
            assert parts.c2 == 0
            assert parts.c3 == 0
            assert [parts.c0, parts.c1, parts.c2, parts.c3] == triple_loop_partition(graph, set(matching))

    def test_blocked_partition(self, monkeypatch):
        """Test the partitioned kernel with one pair per block"""
        rng = np.random.default_rng(31)
        graph = random_graph(18, 0.5, rng)
        special = {pair for pair in combinations(range(18), 2) if rng.random() < 0.3}
        monkeypatch.setattr(tri_count, "PAIR_BLOCK_BYTES", 1)
        parts = count_partitioned(graph, sorted(special))
        assert [parts.c0, parts.c1, parts.c2, parts.c3] == triple_loop_partition(graph, special)

    @settings(max_examples=200, deadline=None)
    @given(n=st.integers(min_value=3, max_value=16),
           q=st.floats(min_value=0.0, max_value=1.0),
           seed=st.integers(min_value=0, max_value=2**32 - 1))
    def test_partition_identity(self, n, q, seed):
        """Test that the classification matches the triple loop and sums to S"""
        rng = np.random.default_rng(seed)
        graph = random_graph(n, 0.5, rng)
        special = {pair for pair in combinations(range(n), 2) if rng.random() < q}
        parts = count_partitioned(graph, sorted(special))
        assert parts.total == count_triangles(graph)
        assert [parts.c0, parts.c1, parts.c2, parts.c3] == triple_loop_partition(graph, special)

    def test_counts_add(self):
        """Test that partitioned counts add componentwise"""
        total = PartitionedCounts(c0=1, c1=2) + PartitionedCounts(c1=1, c3=4)
        assert total == PartitionedCounts(c0=1, c1=3, c2=0, c3=4)
        assert total.total == 8


class TestNormalizeCount:
    """Test standardization of counts"""

    def test_mean_maps_to_zero(self):
        """Test that s = p^3 C(10,3) = 15 standardizes to 0"""
        assert normalize_count(15, 10, 0.5) == 0.0

    def test_against_exact_variance(self):
        """Test n=6, p=0.5, s=10 with the enumerated variance 5"""
        assert normalize_count(10, 6, 0.5) == pytest.approx(7.5 / math.sqrt(5.0), rel=1e-12)

    def test_small_n_rejected(self):
        """Test that n < 4 is outside the domain"""
        with pytest.raises(DomainError):
            normalize_count(1, 3, 0.5)


class TestTriangleCountStream:
    """Test the Monte Carlo stream"""

    def test_independent_of_threads_and_batches(self):
        """Test that threads and batch size do not change the stream"""
        params = GraphParams(n=30, p=0.5, seed=99)
        base = triangle_count_stream(params, 100, threads=1, batch_size=256)
        assert np.array_equal(base, triangle_count_stream(params, 100, threads=4, batch_size=7))
        assert np.array_equal(base, triangle_count_stream(params, 100, threads=2, batch_size=100))

    def test_empty_stream(self):
        """Test that zero samples give an empty array"""
        assert triangle_count_stream(GraphParams(n=10, p=0.5), 0).size == 0
