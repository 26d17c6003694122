#!/usr/bin/env python3
"""
Tests for the exhaustive-enumeration oracle
"""

import math
from itertools import combinations

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from src.errors import ParameterError
from src.graph_core import from_edges
from src.moments import mean_triangles
from src.oracle import (
    PmfTable,
    enumerate_counts,
    exact_charfun,
    exact_pmf,
    pmf_statistics,
    total_variation,
)
from src.spectral import LatticeSpec
from src.tri_count import count_triangles
from tests.conftest import EXACT_TALLY

TALLY_N6 = [5789, 6980, 6910, 4560, 3030, 2292, 1230, 780, 600, 180, 236,
            60, 45, 60, 0, 0, 15, 0, 0, 0, 1]


class TestEnumerateCounts:
    """Test the (edges, triangles) tally"""

    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_triangle_tally(self, n):
        """Test the number of graphs with each triangle count"""
        table = enumerate_counts(n)
        assert table.sum(axis=0).tolist() == EXACT_TALLY[n]
        assert int(table.sum()) == 2 ** math.comb(n, 2)

    def test_triangle_tally_n6(self):
        """Test the n = 6 tally, including the gaps at 14, 15 and 17..19"""
        table = enumerate_counts(6)
        assert table.sum(axis=0).tolist() == TALLY_N6
        assert sum(TALLY_N6) == 2 ** 15

    def test_edge_marginal_is_binomial(self):
        """Test that graphs with m edges number C(C(n,2), m)"""
        table = enumerate_counts(5)
        assert table.sum(axis=1).tolist() == [math.comb(10, m) for m in range(11)]

    def test_complete_graph_row(self):
        """Test that the only graph with all edges has C(n,3) triangles"""
        table = enumerate_counts(5)
        assert table[10].tolist() == [0] * 10 + [1]

    @pytest.mark.parametrize("shards,workers", [(2, 1), (8, 1), (4, 2)])
    def test_sharding_is_invisible(self, shards, workers):
        """Test that any shard and worker count gives the unsharded table"""
        assert np.array_equal(enumerate_counts(5, shards=shards, workers=workers), enumerate_counts(5))

    @pytest.mark.parametrize("shards", [0, 3, 2 ** 7])
    def test_invalid_shards(self, shards):
        """Test that shards must be a power of two within the mask width"""
        with pytest.raises(ParameterError):
            enumerate_counts(4, shards=shards)


class TestExactPmf:
    """Test exact pmfs built from the tally"""

    def test_single_triangle(self):
        """Test n = 3: Pr[S=1] = p^3"""
        pmf = exact_pmf(3, 0.3)
        assert pmf.support == [0, 1]
        assert pmf.prob(1) == pytest.approx(0.027, rel=1e-14)

    def test_uniform_weights_at_half(self):
        """Test that at p = 1/2 the pmf is the tally over 2^C(n,2)"""
        pmf = exact_pmf(5, 0.5)
        expected = {k: c / 1024 for k, c in enumerate(EXACT_TALLY[5]) if c}
        assert pmf.as_dict() == pytest.approx(expected, rel=1e-14)

    def test_support_maximum(self):
        """Test that the largest supported count is C(n,3)"""
        assert exact_pmf(6, 0.5).support[-1] == 20
        assert exact_pmf(7, 0.5).support[-1] == 35

    def test_missing_values_absent(self):
        """Test that impossible counts are not in the support"""
        pmf = exact_pmf(6, 0.4)
        assert 14 not in pmf.support
        assert pmf.prob(14) == 0.0

    def test_normalized(self):
        """Test that the probabilities sum to 1"""
        assert math.fsum(exact_pmf(7, 0.37).probs) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("p", [0.3, 0.5])
    def test_complement_symmetry(self, p):
        """Test that triangles of complements under p follow the exact law at 1 - p"""
        n = 5
        pairs = list(combinations(range(n), 2))
        law = {}
        for mask in range(1 << len(pairs)):
            absent = [pair for i, pair in enumerate(pairs) if not mask >> i & 1]
            weight = p ** (len(pairs) - len(absent)) * (1 - p) ** len(absent)
            s = count_triangles(from_edges(n, absent))
            law[s] = law.get(s, 0.0) + weight
        flipped = exact_pmf(n, 1 - p)
        assert sorted(k for k, v in law.items() if v > 0) == flipped.support
        for k in flipped.support:
            assert law[k] == pytest.approx(flipped.prob(k), abs=1e-12)
        complement_mean = math.fsum(k * v for k, v in law.items())
        both = pmf_statistics(exact_pmf(n, p)).mean + complement_mean
        assert both == pytest.approx(math.comb(n, 3) * (p ** 3 + (1 - p) ** 3), rel=1e-12)
        assert complement_mean == pytest.approx(mean_triangles(n, 1 - p), rel=1e-12)

    def test_large_n_refused(self):
        """Test that n > 7 needs allow_large"""
        with pytest.raises(ParameterError):
            exact_pmf(8, 0.5)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.5])
    def test_invalid_probability(self, p):
        """Test that p must be in (0, 1)"""
        with pytest.raises(ParameterError):
            exact_pmf(4, p)


class TestPmfStatistics:
    """Test summaries of exact tables"""

    def test_mod3_marginals_n3(self):
        """Test the residues of the single-triangle distribution"""
        stats = pmf_statistics(exact_pmf(3, 0.5), moduli=(3,))
        assert stats.mod_q_marginals[3] == pytest.approx({0: 0.875, 1: 0.125, 2: 0.0})

    @pytest.mark.parametrize("n,expected", [
        (4, [0.640625, 0.265625, 0.09375]),
        (6, [0.3602294921875, 0.338775634765625, 0.300994873046875]),
        (7, [0.33719253540039062, 0.33279609680175781, 0.33001136779785156]),
    ])
    def test_mod3_marginals(self, n, expected):
        """Test residues mod 3 approach uniformity"""
        marginals = pmf_statistics(exact_pmf(n, 0.5)).mod_q_marginals[3]
        assert [marginals[a] for a in range(3)] == pytest.approx(expected, abs=1e-14)

    def test_moments_n4(self):
        """Test mean 0.5 and variance 0.625 at n = 4, p = 1/2"""
        stats = pmf_statistics(exact_pmf(4, 0.5))
        assert stats.mean == pytest.approx(0.5)
        assert stats.variance == pytest.approx(0.625)

    def test_bad_modulus(self):
        """Test that q < 2 is rejected"""
        with pytest.raises(ParameterError):
            pmf_statistics(exact_pmf(4, 0.5), moduli=(1,))


class TestExactCharfun:
    """Test the characteristic function of an exact table"""

    def test_at_zero(self):
        """Test psi(0) = 1"""
        pmf = exact_pmf(6, 0.5)
        assert exact_charfun(pmf, LatticeSpec.for_model(6, 0.5), 0.0) == pytest.approx(1.0)

    def test_bounded_by_one(self):
        """Test |psi(t)| <= 1 over a grid"""
        pmf = exact_pmf(6, 0.3)
        values = exact_charfun(pmf, LatticeSpec.for_model(6, 0.3), np.linspace(-10, 10, 101))
        assert values.shape == (101,)
        assert np.all(np.abs(values) <= 1.0 + 1e-12)

    def test_periodic_in_two_pi_b(self):
        """Test that psi is periodic with period 2 pi b on a lattice"""
        pmf = exact_pmf(5, 0.5)
        lattice = LatticeSpec(a=0.0, b=1.0)
        assert exact_charfun(pmf, lattice, 0.7) == pytest.approx(exact_charfun(pmf, lattice, 0.7 + 2 * math.pi))


class TestPmfTable:
    """Test table validation and I/O"""

    def test_probabilities_must_sum_to_one(self):
        """Test that unnormalized tables are rejected"""
        with pytest.raises(ValidationError):
            PmfTable(n=4, p=0.5, support=[0, 1], probs=[0.5, 0.6], kind="exact")

    def test_exact_normalization_tolerance(self):
        """Test that exact tables must sum to 1 within 1e-12"""
        PmfTable(n=4, p=0.5, support=[0, 1], probs=[0.5, 0.5 + 1e-14], kind="exact")
        with pytest.raises(ValidationError):
            PmfTable(n=4, p=0.5, support=[0, 1], probs=[0.5, 0.5 + 1e-10], kind="exact")

    def test_empirical_counts_must_match(self):
        """Test that empirical probabilities are exactly counts / sample_count"""
        with pytest.raises(ValidationError):
            PmfTable(n=4, p=0.5, support=[0, 1], probs=[0.5, 0.5], kind="empirical",
                     sample_count=4, counts=[2, 1])
        with pytest.raises(ValidationError):
            PmfTable(n=4, p=0.5, support=[0, 1], probs=[0.5 + 1e-10, 0.5 - 1e-10], kind="empirical",
                     sample_count=4, counts=[2, 2])

    def test_empirical_json_reload(self, tmp_path):
        """Test that a sampled table with inexact quotients reads back equal"""
        pmf = PmfTable.from_counts(6, 0.5, np.array([1, 1, 1, 0, 4]))
        assert PmfTable.read_json(pmf.write_json(tmp_path / "pmf.json")) == pmf

    def test_support_must_increase(self):
        """Test that unsorted supports are rejected"""
        with pytest.raises(ValidationError):
            PmfTable(n=4, p=0.5, support=[1, 0], probs=[0.5, 0.5], kind="exact")

    def test_support_range(self):
        """Test that counts above C(n,3) are rejected"""
        with pytest.raises(ValidationError):
            PmfTable(n=4, p=0.5, support=[0, 5], probs=[0.5, 0.5], kind="exact")

    def test_from_counts(self):
        """Test an empirical table from a histogram"""
        pmf = PmfTable.from_counts(4, 0.5, np.array([3, 0, 1]))
        assert pmf.support == [0, 2]
        assert pmf.probs == [0.75, 0.25]
        assert pmf.sample_count == 4
        assert pmf.counts == [3, 1]

    def test_from_zero_counts(self):
        """Test that an all-zero histogram is rejected"""
        with pytest.raises(ParameterError):
            PmfTable.from_counts(4, 0.5, np.zeros(5))

    def test_csv_columns(self, tmp_path):
        """Test the k, prob CSV layout"""
        pmf = exact_pmf(4, 0.5)
        frame = pd.read_csv(pmf.write_csv(tmp_path / "pmf.csv"))
        assert list(frame.columns) == ["k", "prob"]
        assert frame["k"].tolist() == [0, 1, 2, 4]
        assert frame["prob"].tolist() == pmf.probs

    def test_json_reload(self, tmp_path):
        """Test that a written table reads back equal"""
        pmf = exact_pmf(5, 0.4)
        assert PmfTable.read_json(pmf.write_json(tmp_path / "pmf.json")) == pmf

    def test_total_variation(self):
        """Test total variation of identical and disjoint tables"""
        a = PmfTable(n=4, p=0.5, support=[0], probs=[1.0], kind="exact")
        b = PmfTable(n=4, p=0.5, support=[1], probs=[1.0], kind="exact")
        assert total_variation(a, a) == 0.0
        assert total_variation(a, b) == 1.0
