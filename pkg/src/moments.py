#!/usr/bin/env python3
"""
Moments of the triangle count S_n of G(n,p).

Exact mean and variance come from the covariance decomposition over pairs of
triangles: identical pairs contribute C(n,3)(p^3 - p^6), ordered pairs sharing
exactly one edge ((n)_4 / 2 of them) contribute p^5 - p^6 each, and
edge-disjoint pairs are independent. Higher moments are only available as the
leading-order pairing prediction.
"""

import logging
import math
from typing import Dict, Iterable, Union

import numpy as np
from pydantic import BaseModel

from src.errors import DomainError, ParameterError

logger = logging.getLogger(__name__)

MAX_EMPIRICAL_K = 8


def _check_probability(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"p must lie in [0, 1], got {p}")


def mean_triangles(n: int, p: float) -> float:
    """mu_n = p^3 C(n,3); zero when n < 3"""
    _check_probability(p)
    if n < 3:
        return 0.0
    return p ** 3 * math.comb(n, 3)


def edge_share_covariance(p: float) -> float:
    """C(p) = Cov(X_t, X_t') for two triangles sharing exactly one edge

    The pair spans five distinct edges, so E[X_t X_t'] = p^5.
    """
    _check_probability(p)
    return p ** 5 - p ** 6


def variance_triangles(n: int, p: float) -> float:
    """Exact Var[S_n]

    Raises:
        DomainError: if n < 3 (no triangles, zero variance)
    """
    _check_probability(p)
    if n < 3:
        raise DomainError(f"variance of the triangle count is degenerate for n={n}")
    identical = math.comb(n, 3) * (p ** 3 - p ** 6)
    sharing_pairs = math.perm(n, 4) // 2
    return identical + sharing_pairs * edge_share_covariance(p)


def double_factorial(k: int) -> int:
    """k!! with the convention (-1)!! = 0!! = 1"""
    return math.prod(range(k, 0, -2))


def gaussian_moment(k: int) -> float:
    """E[N(0,1)^k]: (k-1)!! for even k, 0 for odd k"""
    if k < 0:
        raise ParameterError("moment order must be nonnegative")
    if k % 2:
        return 0.0
    return float(double_factorial(k - 1))


def predicted_kth_central_moment(n: int, p: float, k: int) -> float:
    """Leading-order prediction for E[(S_n - mu_n)^k]

    Even k: (n)_{2k} C(p)^{k/2} (k-1)!! / 2^{k/2}, counting fully paired tuples
    of triangles. Odd k: 0, the true value being O(n^{2k-1}).
    """
    if k < 0:
        raise ParameterError("moment order must be nonnegative")
    if k == 0:
        return 1.0
    if k % 2:
        return 0.0
    half = k // 2
    # math.perm is exact; the float conversion only rounds once
    falling = float(math.perm(n, 2 * k))
    return falling * edge_share_covariance(p) ** half * double_factorial(k - 1) / 2 ** half


def _neumaier(total: float, comp: float, x: float):
    """One step of Neumaier compensated summation"""
    t = total + x
    if abs(total) >= abs(x):
        comp += (total - t) + x
    else:
        comp += (x - t) + total
    return t, comp


class MomentEstimate(BaseModel):
    """A sample moment with its standard error"""
    value: float
    std_error: float


class MomentAccumulator:
    """Streaming power sums Σ r^j for j = 1..2*k_max

    Accumulators merge associatively, so batches can be reduced in any
    grouping; merging in batch order gives bit-identical results.
    """

    def __init__(self, k_max: int):
        if not 1 <= k_max <= MAX_EMPIRICAL_K:
            raise ParameterError(f"k_max must be in 1..{MAX_EMPIRICAL_K}, got {k_max}")
        self.k_max = k_max
        self.count = 0
        self._sums = np.zeros(2 * k_max + 1)
        self._comp = np.zeros(2 * k_max + 1)

    def update(self, values) -> "MomentAccumulator":
        """Add a batch of values"""
        r = np.atleast_1d(np.asarray(values, dtype=np.float64))
        if r.size == 0:
            return self
        powers = np.ones_like(r)
        for j in range(1, 2 * self.k_max + 1):
            powers = powers * r
            self._sums[j], self._comp[j] = _neumaier(
                self._sums[j], self._comp[j], float(powers.sum())
            )
        self.count += r.size
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        """Combine two accumulators of the same order"""
        if other.k_max != self.k_max:
            raise ParameterError("cannot merge accumulators of different order")
        merged = MomentAccumulator(self.k_max)
        merged.count = self.count + other.count
        for j in range(1, 2 * self.k_max + 1):
            total, comp = _neumaier(self._sums[j], self._comp[j] + other._comp[j], other._sums[j])
            merged._sums[j], merged._comp[j] = total, comp
        return merged

    def raw(self, j: int) -> float:
        return (self._sums[j] + self._comp[j]) / self.count

    def result(self) -> Dict[int, MomentEstimate]:
        """Sample moments E[r^k], k = 1..k_max, with standard errors"""
        if self.count == 0:
            raise ParameterError("no values were accumulated")
        out = {}
        for k in range(1, self.k_max + 1):
            value = self.raw(k)
            spread = max(self.raw(2 * k) - value ** 2, 0.0)
            out[k] = MomentEstimate(value=value, std_error=math.sqrt(spread / self.count))
        return out


def empirical_moments(r_values: Union[np.ndarray, Iterable], k_max: int) -> Dict[int, MomentEstimate]:
    """Sample moments of a stream of standardized values

    Args:
        r_values: an array, or an iterable of arrays/floats consumed once
        k_max: highest moment order (at most 8)

    Returns:
        Map k -> MomentEstimate

    Raises:
        ParameterError: on an empty stream or k_max out of range
    """
    acc = MomentAccumulator(k_max)
    if isinstance(r_values, np.ndarray):
        acc.update(r_values)
    else:
        for chunk in r_values:
            acc.update(chunk)
    if acc.count == 0:
        raise ParameterError("empirical_moments needs a nonempty stream")
    return acc.result()


class MomentReport(BaseModel):
    """Exact, predicted and sampled moments of the standardized count"""
    n: int
    p: float
    mean: float
    variance: float
    empirical_moments: Dict[int, float]
    empirical_std_errors: Dict[int, float]
    predicted_moments: Dict[int, float]
    leading_order_moments: Dict[int, float]
    sample_count: int


def moment_report(n: int, p: float, counts: np.ndarray, k_max: int = 4) -> MomentReport:
    """Build a MomentReport from sampled triangle counts

    leading_order_moments holds predicted_kth_central_moment / sigma^k, the
    finite-n value the Gaussian moments are approached through.
    """
    if n < 4:
        raise DomainError(f"standardized moments need n >= 4, got n={n}")
    mean = mean_triangles(n, p)
    variance = variance_triangles(n, p)
    sigma = math.sqrt(variance)
    r = (np.asarray(counts, dtype=np.float64) - mean) / sigma
    estimates = empirical_moments(r, k_max)
    logger.info(f"Moments at n={n}, p={p} from {r.size} samples: "
                f"E[R^2]={estimates[min(2, k_max)].value:.4f}")
    return MomentReport(
        n=n,
        p=p,
        mean=mean,
        variance=variance,
        empirical_moments={k: e.value for k, e in estimates.items()},
        empirical_std_errors={k: e.std_error for k, e in estimates.items()},
        predicted_moments={k: gaussian_moment(k) for k in range(1, k_max + 1)},
        leading_order_moments={
            k: predicted_kth_central_moment(n, p, k) / sigma ** k for k in range(1, k_max + 1)
        },
        sample_count=int(r.size),
    )
