#!/usr/bin/env python3
"""
Tests for closed-form and empirical moments
"""

import json
import math
from itertools import product

import numpy as np
import pytest

from src.errors import DomainError, ParameterError
from src.graph_core import GraphParams
from src.moments import (
    MomentAccumulator,
    double_factorial,
    edge_share_covariance,
    empirical_moments,
    gaussian_moment,
    mean_triangles,
    moment_report,
    predicted_kth_central_moment,
    variance_triangles,
)
from src.oracle import exact_pmf, pmf_statistics
from src.tri_count import triangle_count_stream


class TestClosedForms:
    """Test mean, variance and the edge-sharing covariance"""

    def test_mean(self):
        """Test mu = p^3 C(n,3)"""
        assert mean_triangles(10, 0.5) == 15.0
        assert mean_triangles(3, 1.0 - 1e-12) == pytest.approx(1.0)
        assert mean_triangles(2, 0.5) == 0.0

    def test_variance_n4(self):
        """Test the enumerated value Var[S_4] = 0.625 at p = 0.5"""
        assert variance_triangles(4, 0.5) == pytest.approx(0.625, rel=1e-14)

    @pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
    def test_variance_single_triangle(self, p):
        """Test that n = 3 is a Bernoulli(p^3) variance"""
        assert variance_triangles(3, p) == pytest.approx(p ** 3 * (1 - p ** 3), rel=1e-12)

    def test_variance_degenerate(self):
        """Test that n < 3 is outside the domain"""
        with pytest.raises(DomainError):
            variance_triangles(2, 0.5)

    def test_probability_checked(self):
        """Test that p outside [0, 1] is rejected"""
        with pytest.raises(ParameterError):
            mean_triangles(5, 1.2)

    @pytest.mark.parametrize("n", [4, 5, 6, 7])
    @pytest.mark.parametrize("p", [0.2, 0.3, 0.5, 0.8])
    def test_against_enumeration(self, n, p):
        """Test closed forms against the exact pmf"""
        stats = pmf_statistics(exact_pmf(n, p))
        assert stats.mean == pytest.approx(mean_triangles(n, p), rel=1e-10)
        assert stats.variance == pytest.approx(variance_triangles(n, p), rel=1e-10)

    def test_edge_share_covariance_limits(self):
        """Test that C(p) vanishes at p = 0 and p = 1"""
        assert edge_share_covariance(0.0) == 0.0
        assert edge_share_covariance(1.0) == 0.0

    def test_edge_share_covariance_enumeration(self):
        """Test C(1/2) against all 2^5 outcomes of two edge-sharing triangles"""
        p = 0.5
        total = 0.0
        # edges: shared, then two of each triangle
        for shared, a1, a2, b1, b2 in product((0, 1), repeat=5):
            x_t = shared * a1 * a2
            x_u = shared * b1 * b2
            total += (x_t - p ** 3) * (x_u - p ** 3) / 32.0
        assert edge_share_covariance(p) == pytest.approx(total, rel=1e-14)

    def test_variance_growth(self):
        """Test that doubling n multiplies the variance by about 16"""
        for n in (100, 200, 400):
            ratio = variance_triangles(2 * n, 0.5) / variance_triangles(n, 0.5)
            assert ratio == pytest.approx(16.0, rel=0.05)


class TestPredictedMoments:
    """Test leading-order moment predictions"""

    def test_double_factorial(self):
        """Test small double factorials"""
        assert [double_factorial(k) for k in (-1, 0, 1, 3, 5, 7)] == [1, 1, 1, 3, 15, 105]

    @pytest.mark.parametrize("k,expected", [(0, 1.0), (1, 0.0), (2, 1.0), (3, 0.0), (4, 3.0), (6, 15.0)])
    def test_gaussian_moments(self, k, expected):
        """Test E[N(0,1)^k]"""
        assert gaussian_moment(k) == expected

    def test_order_zero_and_odd(self):
        """Test the k = 0 and odd-k conventions"""
        assert predicted_kth_central_moment(50, 0.5, 0) == 1.0
        assert predicted_kth_central_moment(50, 0.5, 3) == 0.0

    def test_second_moment_matches_variance(self):
        """Test that the k = 2 prediction approaches the exact variance"""
        ratio = predicted_kth_central_moment(1000, 0.5, 2) / variance_triangles(1000, 0.5)
        assert ratio == pytest.approx(1.0, abs=0.02)

    def test_fourth_moment_pairing(self):
        """Test that the k = 4 prediction is about 3 times the squared leading variance"""
        n, p = 200, 0.5
        leading = math.perm(n, 4) * edge_share_covariance(p) / 2
        assert predicted_kth_central_moment(n, p, 4) == pytest.approx(3 * leading ** 2, rel=0.10)

    def test_negative_order_rejected(self):
        """Test that negative orders are rejected"""
        with pytest.raises(ParameterError):
            gaussian_moment(-1)


class TestEmpiricalMoments:
    """Test streaming moment estimation"""

    def test_constant_zero(self):
        """Test that a zero stream has zero moments"""
        result = empirical_moments(np.zeros(10), 4)
        assert all(est.value == 0.0 for est in result.values())

    def test_plus_minus_one(self):
        """Test that {-1, 1} has even moments 1 and odd moments 0"""
        result = empirical_moments(np.array([-1.0, 1.0]), 6)
        assert [result[k].value for k in range(1, 7)] == [0.0, 1.0, 0.0, 1.0, 0.0, 1.0]

    def test_stream_of_chunks(self):
        """Test that an iterable of chunks equals the concatenated array"""
        values = np.random.default_rng(1).normal(size=1000)
        chunked = empirical_moments(iter(np.array_split(values, 7)), 4)
        whole = empirical_moments(values, 4)
        for k in range(1, 5):
            assert chunked[k].value == pytest.approx(whole[k].value, rel=1e-12, abs=1e-15)

    def test_empty_stream(self):
        """Test that an empty stream is rejected"""
        with pytest.raises(ParameterError):
            empirical_moments(np.zeros(0), 2)
        with pytest.raises(ParameterError):
            empirical_moments(iter([]), 2)

    def test_k_max_limits(self):
        """Test that k_max must lie in 1..8"""
        with pytest.raises(ParameterError):
            MomentAccumulator(9)
        with pytest.raises(ParameterError):
            MomentAccumulator(0)

    def test_merge_equals_single_pass(self):
        """Test that merged accumulators agree with one accumulator"""
        values = np.random.default_rng(2).normal(size=500)
        left = MomentAccumulator(4).update(values[:200])
        right = MomentAccumulator(4).update(values[200:])
        merged = left.merge(right).result()
        single = MomentAccumulator(4).update(values).result()
        assert merged[2].value == pytest.approx(single[2].value, rel=1e-12)
        assert merged[4].std_error == pytest.approx(single[4].std_error, rel=1e-9)

    def test_standard_error(self):
        """Test the standard error of the second moment for a +-1 stream"""
        result = empirical_moments(np.array([-1.0, 1.0, -1.0, 1.0]), 2)
        assert result[1].std_error == pytest.approx(0.5)
        assert result[2].std_error == 0.0


class TestMomentReport:
    """Test the moment report built from sampled counts"""

    def test_report_fields(self):
        """Test exact fields and a loose Monte Carlo check of E[R^2]"""
        n, p = 20, 0.5
        counts = triangle_count_stream(GraphParams(n=n, p=p, seed=4), 4000)
        report = moment_report(n, p, counts, k_max=4)
        assert report.mean == mean_triangles(n, p)
        assert report.variance == variance_triangles(n, p)
        assert report.predicted_moments == {1: 0.0, 2: 1.0, 3: 0.0, 4: 3.0}
        assert report.sample_count == 4000
        second = report.empirical_moments[2]
        assert abs(second - 1.0) < 5 * report.empirical_std_errors[2]
        assert abs(report.empirical_moments[1]) < 5 * report.empirical_std_errors[1]

    def test_report_serializes(self):
        """Test that the report round-trips through JSON field names"""
        report = moment_report(10, 0.5, np.array([15, 14, 16, 15]), k_max=2)
        payload = json.loads(report.model_dump_json())
        assert set(payload) >= {"n", "p", "mean", "variance", "empirical_moments",
                                "predicted_moments", "sample_count"}

    def test_report_small_n(self):
        """Test that standardized moments need n >= 4"""
        with pytest.raises(DomainError):
            moment_report(3, 0.5, np.array([0, 1]), k_max=2)
