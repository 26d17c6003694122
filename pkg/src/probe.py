#!/usr/bin/env python3
"""
Conditioning experiments on G(n,p) triangle counts.

Matching decomposition: split [n] into halves U, V and let E be a union of k
disjoint perfect matchings between them. Every triangle has 0, 1 or 2 edges
in E (counts C, Y, Z). Given the edges outside E, Y is the sum over e in E of
X_e * Y_e, with Y_e the number of two-paths between e's endpoints using only
edges outside E.

Bipartite exposure: reveal U's internal edges, write A_u for u's neighbourhood
in V and B for the graph on V. Then
S = S_U + Σ_{uu* ∈ E_U} <A_u, A_u*> + Σ_u <P(A_u), B> + Q(B), and the
h-vector Σ_u P(A_u) - P(A'_u) of two independent draws controls the
conditional characteristic function.
"""

import logging
import math
from pathlib import Path
from typing import Dict, List, Literal, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, model_validator
from scipy.stats import binom

from src.errors import InvariantError, ParameterError
from src.graph_core import (
    WORD_BITS,
    BitAdjacency,
    GraphParams,
    complement_mask,
    counter_generator,
    from_edges,
    map_batches,
    sample_batch,
    to_dense,
)
from src.moments import variance_triangles
from src.tri_count import PartitionedCounts, count_partitioned_batch, count_triangles, count_triangles_batch

logger = logging.getLogger(__name__)

BAND_LOW_EXPONENT = 0.49
BAND_HIGH_EXPONENT = 0.51
ASYMPTOTIC_GAMMA = 0.1


class MatchingPlan(BaseModel):
    """k disjoint perfect matchings between U = [0, n/2) and V = [n/2, n)"""
    n: int
    k: int
    matchings: List[List[Tuple[int, int]]]

    @model_validator(mode='after')
    def validate_matchings(self):
        """k perfect matchings, pairwise disjoint, all across the cut"""
        half = self.n // 2
        if len(self.matchings) != self.k:
            raise ValueError(f"expected {self.k} matchings, got {len(self.matchings)}")
        seen = set()
        for matching in self.matchings:
            if sorted(u for u, _ in matching) != list(range(half)):
                raise ValueError("each matching must cover U exactly once")
            if sorted(v for _, v in matching) != list(range(half, self.n)):
                raise ValueError("each matching must cover V exactly once")
            for edge in matching:
                if edge in seen:
                    raise ValueError(f"edge {edge} appears in two matchings")
                seen.add(edge)
        return self

    @property
    def half(self) -> int:
        return self.n // 2

    @property
    def u_vertices(self) -> List[int]:
        return list(range(self.half))

    @property
    def v_vertices(self) -> List[int]:
        return list(range(self.half, self.n))

    @property
    def special_edges(self) -> List[Tuple[int, int]]:
        """E, in matching order"""
        return [edge for matching in self.matchings for edge in matching]

    def e_mask(self) -> BitAdjacency:
        return from_edges(self.n, self.special_edges)

    def f_mask(self) -> BitAdjacency:
        return complement_mask(self.e_mask())

    def potential_paths(self) -> int:
        """m_e: two-paths joining a matching edge's endpoints inside F

        The middle vertex ranges over the other n - 2 vertices, minus the
        k - 1 other matching partners of each endpoint.
        """
        return (self.n - 2) - 2 * (self.k - 1)


def build_matching_plan(n: int, k: int) -> MatchingPlan:
    """Cyclic-shift matchings M_j = {(i, n/2 + (i + j - 1) mod n/2)}, j = 1..k

    Raises:
        ParameterError: on odd n or k outside 1..n/2
    """
    if n < 2 or n % 2:
        raise ParameterError(f"matching plans need an even n >= 2, got n={n}")
    half = n // 2
    if not 1 <= k <= half:
        raise ParameterError(f"k must lie in 1..{half} for n={n}, got k={k}")
    matchings = [[(i, half + (i + j - 1) % half) for i in range(half)] for j in range(1, k + 1)]
    return MatchingPlan(n=n, k=k, matchings=matchings)


class ProbeReport(BaseModel):
    """Measured quantities of one conditioning experiment"""
    experiment: Literal["decomposition", "hvector"]
    n: int
    p: float
    trials: int
    seed: int
    k: Optional[int] = None
    u_size: Optional[int] = None

    # matching decomposition
    c_y_z: Optional[PartitionedCounts] = None
    c_y_z_means: Optional[Dict[str, float]] = None
    y_e_min: Optional[int] = None
    bad_l_threshold: Optional[float] = None
    bad_L_freq: Optional[float] = None
    bad_edge_freq: Optional[float] = None
    bad_edge_exact: Optional[float] = None
    z_mean: Optional[float] = None
    z_var: Optional[float] = None
    z_var_bound: Optional[int] = None
    m_e: Optional[int] = None
    tracked_edge: Optional[Tuple[int, int]] = None
    y_e0_mean: Optional[float] = None
    y_e0_expected: Optional[float] = None
    y_e0_std_error: Optional[float] = None

    # h-vector
    h_coord_stats: Optional[Dict[str, float]] = None
    lambda_e_freq: Optional[float] = None
    lambda_e_exact: Optional[float] = None
    lambda_e_asymptotic: Optional[float] = None
    lambda_freq: Optional[float] = None
    good_pair_freq: Optional[float] = None
    sign_symmetry_stat: Optional[float] = None
    h_coordinates: Optional[List[Dict[str, float]]] = None

    conditional_modulus: Optional[Dict[float, float]] = None

    @model_validator(mode='after')
    def validate_report(self):
        """Frequencies are probabilities; the Var[Z] bound is 6nk^3"""
        for name in ("bad_L_freq", "bad_edge_freq", "bad_edge_exact", "lambda_e_freq",
                     "lambda_freq", "good_pair_freq"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} is not a frequency")
        if self.z_var_bound is not None and self.z_var_bound != 6 * self.n * self.k ** 3:
            raise ValueError("z_var_bound must equal 6 n k^3")
        return self

    def write_json(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(self.model_dump_json(indent=2, exclude={"h_coordinates"}) + "\n")
        logger.info(f"Wrote {self.experiment} probe report to {path}")
        return path

    def write_coordinate_csv(self, path: Union[str, Path]) -> Path:
        """Per-coordinate h statistics (v, w, mean, variance)"""
        if self.h_coordinates is None:
            raise ParameterError("report was built without per-coordinate statistics")
        path = Path(path)
        pd.DataFrame(self.h_coordinates).to_csv(path, index=False, float_format="%.17g")
        return path


def _log_modulus(p: float, theta: np.ndarray) -> np.ndarray:
    """log |1 - p + p e^{i theta}|"""
    return 0.5 * np.log1p(-2.0 * p * (1.0 - p) * (1.0 - np.cos(theta)))


def _mean_conditional_modulus(p: float, weights: np.ndarray, t_grid: Sequence[float],
                              sigma: float) -> np.ndarray:
    """Per trial and t: Π_e |1 - p + p e^{i t w_e / sigma}| for weights (trials, coords)

    Returns an array of shape (trials, len(t_grid)).
    """
    out = np.empty((weights.shape[0], len(t_grid)))
    for j, t in enumerate(t_grid):
        out[:, j] = np.exp(_log_modulus(p, t * weights / sigma).sum(axis=1))
    return out


def run_decomposition_trials(params: GraphParams, plan: MatchingPlan, trials: int,
                             threads: int = 1, batch_size: int = 256,
                             t_grid: Optional[Sequence[float]] = None) -> ProbeReport:
    """Sample graphs and measure the C/Y/Z decomposition relative to plan's E

    Trial i uses sample index i of params. Every trial checks
    c0 + c1 + c2 + c3 = S, c3 = 0 and c1 = Σ_{e∈E} X_e Y_e exactly.

    bad_edge_freq is the fraction of (trial, e) pairs with Y_e < n p^2 / 2 and
    bad_edge_exact its exact value Pr[Bin(m_e, p^2) < n p^2 / 2].

    Args:
        params: graph model and seed
        plan: matching plan on params.n vertices
        trials: number of sampled graphs
        t_grid: optional t values for the mean conditional modulus
            Π_{e∈E} |1 - p + p e^{i t Y_e / sigma_n}|

    Raises:
        ParameterError: on trials < 1 or a plan for another n
        InvariantError: if a decomposition identity fails
    """
    if trials < 1:
        raise ParameterError(f"trials must be at least 1, got {trials}")
    if plan.n != params.n:
        raise ParameterError(f"plan is for n={plan.n}, graph has n={params.n}")
    n, p = params.n, params.p
    e_mask = plan.e_mask()
    f_rows = plan.f_mask().rows
    eu = np.array([u for u, _ in plan.special_edges])
    ev = np.array([v for _, v in plan.special_edges])
    ev_word, ev_bit = ev // WORD_BITS, (ev % WORD_BITS).astype(np.uint64)
    threshold = n * p * p / 2.0
    sigma = math.sqrt(variance_triangles(n, p)) if n >= 3 else 1.0

    def run(start: int, count: int):
        rows = sample_batch(params, start, count)
        parts = count_partitioned_batch(rows, e_mask)
        totals = count_triangles_batch(rows)
        f = rows & f_rows
        y_e = np.bitwise_count(f[:, eu, :] & f[:, ev, :]).sum(axis=-1, dtype=np.int64)
        x_e = ((rows[:, eu, ev_word] >> ev_bit) & np.uint64(1)).astype(np.int64)
        bad = np.flatnonzero(
            (parts.sum(axis=1) != totals) | (parts[:, 3] != 0) | (parts[:, 1] != (x_e * y_e).sum(axis=1))
        )
        if bad.size:
            index = start + int(bad[0])
            logger.error(f"Decomposition identity failed at sample {index}: "
                         f"parts={parts[bad[0]].tolist()} total={int(totals[bad[0]])}")
            raise InvariantError(f"triangle decomposition identity failed at sample index {index}")
        modulus = None if t_grid is None else _mean_conditional_modulus(p, y_e, t_grid, sigma)
        low = y_e < threshold
        return parts, y_e.min(axis=1), low.any(axis=1), y_e[:, 0], modulus, int(low.sum())

    logger.info(f"Running {trials} decomposition trials at n={n}, p={p}, k={plan.k}")
    batches = map_batches(run, trials, batch_size, threads)
    parts = np.concatenate([b[0] for b in batches])
    y_min = np.concatenate([b[1] for b in batches])
    bad_l = np.concatenate([b[2] for b in batches])
    y_e0 = np.concatenate([b[3] for b in batches]).astype(np.float64)
    low_edges = sum(b[5] for b in batches)
    z = parts[:, 2].astype(np.float64)
    ddof = 1 if trials > 1 else 0
    m_e = plan.potential_paths()
    sums = parts.sum(axis=0).tolist()

    modulus = None
    if t_grid is not None:
        mean_mod = np.concatenate([b[4] for b in batches]).mean(axis=0)
        modulus = {float(t): float(v) for t, v in zip(t_grid, mean_mod)}

    report = ProbeReport(
        experiment="decomposition",
        n=n,
        p=p,
        trials=trials,
        seed=params.seed,
        k=plan.k,
        c_y_z=PartitionedCounts(c0=sums[0], c1=sums[1], c2=sums[2], c3=sums[3]),
        c_y_z_means={"C": float(parts[:, 0].mean()), "Y": float(parts[:, 1].mean()),
                     "Z": float(parts[:, 2].mean())},
        y_e_min=int(y_min.min()),
        bad_l_threshold=threshold,
        bad_L_freq=float(bad_l.mean()),
        bad_edge_freq=low_edges / (trials * len(plan.special_edges)),
        bad_edge_exact=float(binom.cdf(math.ceil(threshold) - 1, m_e, p * p)),
        z_mean=float(z.mean()),
        z_var=float(z.var(ddof=ddof)),
        z_var_bound=6 * n * plan.k ** 3,
        m_e=m_e,
        tracked_edge=plan.special_edges[0],
        y_e0_mean=float(y_e0.mean()),
        y_e0_expected=m_e * p * p,
        y_e0_std_error=math.sqrt(m_e * p * p * (1.0 - p * p) / trials),
        conditional_modulus=modulus,
    )
    logger.info(f"Var[Z] estimate {report.z_var:.2f} against bound {report.z_var_bound}; "
                f"bad L frequency {report.bad_L_freq}")
    return report


def h_vector(adj_a: np.ndarray, adj_a_prime: np.ndarray) -> np.ndarray:
    """h = Σ_u P(A_u) - P(A'_u), indexed by pairs {v, w} of V in row-major order

    Args:
        adj_a, adj_a_prime: 0/1 matrices of shape (|U|, |V|); row u is A_u

    Raises:
        ParameterError: if the shapes differ or are not two-dimensional
    """
    a = np.asarray(adj_a, dtype=np.int64)
    b = np.asarray(adj_a_prime, dtype=np.int64)
    if a.ndim != 2 or a.shape != b.shape:
        raise ParameterError(f"h_vector needs equal (|U|, |V|) shapes, got {a.shape} and {b.shape}")
    iv, iw = np.triu_indices(a.shape[1], 1)
    return (a.T @ a - b.T @ b)[iv, iw]


def band_bounds(u_size: int) -> Tuple[float, float]:
    """(|U|^0.49, |U|^0.51)"""
    return u_size ** BAND_LOW_EXPONENT, u_size ** BAND_HIGH_EXPONENT


def band_miss_probability(u_size: int, p: float) -> float:
    """Pr[|X - X'| not in (|U|^0.49, |U|^0.51)] for X, X' iid Bin(|U|, p^2)"""
    if u_size < 1:
        raise ParameterError("u_size must be positive")
    pmf = binom.pmf(np.arange(u_size + 1), u_size, p * p)
    diff = np.correlate(pmf, pmf, mode="full")
    magnitude = np.abs(np.arange(-u_size, u_size + 1))
    low, high = band_bounds(u_size)
    inside = (magnitude > low) & (magnitude < high)
    return float(max(0.0, 1.0 - math.fsum(diff[inside])))


def run_h_experiments(n: int, p: float, u_size: int, trials: int, seed: int = 0,
                      threads: int = 1, batch_size: int = 64,
                      t_grid: Optional[Sequence[float]] = None,
                      coordinate_stats: bool = False) -> ProbeReport:
    """Sample pairs of neighbourhood draws (A, A') and measure the h-vector

    U is the first u_size vertices and V the remaining n - u_size. Trial i
    draws A then A' from the counter stream (seed, i).

    With u_size = 1, good_pair_freq is the frequency of |J △ J'| >= n p (1-p) / 2.
    With u_size >= 2, lambda_e_freq is the fraction of coordinates with |h_e|
    outside (|U|^0.49, |U|^0.51), lambda_freq the frequency of more than
    |V|^2/4 such coordinates, and lambda_e_exact the exact per-coordinate
    miss probability.

    Raises:
        ParameterError: on u_size outside 1..n-2, trials < 1 or p outside (0, 1)
    """
    if not 1 <= u_size <= n - 2:
        raise ParameterError(f"u_size must lie in 1..{n - 2}, got {u_size}")
    if trials < 1:
        raise ParameterError(f"trials must be at least 1, got {trials}")
    if not 0.0 < p < 1.0:
        raise ParameterError(f"p must lie in the open interval (0, 1), got {p}")
    v_size = n - u_size
    low, high = band_bounds(u_size)
    good_threshold = n * p * (1.0 - p) / 2.0
    sigma = math.sqrt(variance_triangles(n, p))
    pair_count = v_size * (v_size - 1) // 2

    def run(start: int, count: int):
        miss = np.zeros(count)
        lam = np.zeros(count, dtype=bool)
        good = np.zeros(count, dtype=bool)
        signs = np.zeros(count)
        moments = np.zeros((count, 2))
        coord_sum = np.zeros(pair_count, dtype=np.int64)
        coord_sq = np.zeros(pair_count, dtype=np.int64)
        h_rows = np.empty((count, pair_count), dtype=np.int64)
        for i in range(count):
            rng = counter_generator(seed, start + i)
            a = rng.random((u_size, v_size)) < p
            a_prime = rng.random((u_size, v_size)) < p
            h = h_vector(a, a_prime)
            h_rows[i] = h
            magnitude = np.abs(h)
            outside = ~((magnitude > low) & (magnitude < high))
            miss[i] = outside.mean() if pair_count else 0.0
            lam[i] = np.count_nonzero(outside) > v_size * v_size / 4.0
            good[i] = np.count_nonzero(a[0] ^ a_prime[0]) >= good_threshold
            signs[i] = np.sign(h).sum()
            moments[i] = h.sum(), (h * h).sum()
            coord_sum += h
            coord_sq += h * h
        modulus = None if t_grid is None else _mean_conditional_modulus(p, h_rows, t_grid, sigma)
        return miss, lam, good, signs, moments, coord_sum, coord_sq, modulus

    logger.info(f"Running {trials} h-vector trials at n={n}, p={p}, |U|={u_size}")
    batches = map_batches(run, trials, batch_size, threads)
    miss = np.concatenate([b[0] for b in batches])
    lam = np.concatenate([b[1] for b in batches])
    good = np.concatenate([b[2] for b in batches])
    signs = np.concatenate([b[3] for b in batches])
    moments = np.concatenate([b[4] for b in batches]).sum(axis=0)
    coord_sum = np.sum([b[5] for b in batches], axis=0)
    coord_sq = np.sum([b[6] for b in batches], axis=0)

    entries = trials * pair_count
    pooled_mean = moments[0] / entries if entries else 0.0
    pooled_var = moments[1] / entries - pooled_mean ** 2 if entries else 0.0
    sign_se = signs.std(ddof=1) / math.sqrt(trials) if trials > 1 else 0.0
    symmetry = float(signs.mean() / sign_se) if sign_se > 0 else 0.0

    coordinates = None
    if coordinate_stats:
        iv, iw = np.triu_indices(v_size, 1)
        c_mean = coord_sum / trials
        c_var = coord_sq / trials - c_mean ** 2
        coordinates = [
            {"v": int(u_size + v), "w": int(u_size + w), "mean": float(m), "variance": float(s)}
            for v, w, m, s in zip(iv, iw, c_mean, c_var)
        ]

    modulus = None
    if t_grid is not None:
        mean_mod = np.concatenate([b[7] for b in batches]).mean(axis=0)
        modulus = {float(t): float(v) for t, v in zip(t_grid, mean_mod)}

    report = ProbeReport(
        experiment="hvector",
        n=n,
        p=p,
        trials=trials,
        seed=seed,
        u_size=u_size,
        h_coord_stats={
            "mean": float(pooled_mean),
            "variance": float(pooled_var),
            "predicted_variance": 2.0 * u_size * p * p * (1.0 - p * p),
            "band_low": low,
            "band_high": high,
            "band_fraction": float(1.0 - miss.mean()),
        },
        good_pair_freq=float(good.mean()) if u_size == 1 else None,
        lambda_e_freq=float(miss.mean()) if u_size >= 2 else None,
        lambda_e_exact=band_miss_probability(u_size, p) if u_size >= 2 else None,
        lambda_e_asymptotic=ASYMPTOTIC_GAMMA if u_size >= 2 else None,
        lambda_freq=float(lam.mean()) if u_size >= 2 else None,
        sign_symmetry_stat=symmetry,
        h_coordinates=coordinates,
        conditional_modulus=modulus,
    )
    if report.lambda_e_freq is not None and report.lambda_e_freq > ASYMPTOTIC_GAMMA:
        logger.warning(f"Band-miss frequency {report.lambda_e_freq:.3f} is above the asymptotic "
                       f"{ASYMPTOTIC_GAMMA} at |U|={u_size} (exact value {report.lambda_e_exact:.3f})")
    return report


class BipartiteCounts(NamedTuple):
    s_u: int
    cross2U: int
    cross2V: int
    q_v: int
    total: int


def _dense_triangles(dense: np.ndarray) -> int:
    if dense.shape[0] < 3:
        return 0
    return int(np.trace(dense @ dense @ dense)) // 6


def bipartite_decomposition_check(adj: BitAdjacency, u_size: int) -> BipartiteCounts:
    """Split the triangles of adj by how many vertices lie in U = [0, u_size)

    Returns (S_U, Σ_{E_U} <A_u, A_u*>, Σ_u <P(A_u), B>, Q(B), S).

    Raises:
        ParameterError: if u_size is outside 1..n
        InvariantError: if the four parts do not sum to S
    """
    if not 1 <= u_size <= adj.n:
        raise ParameterError(f"u_size must lie in 1..{adj.n}, got {u_size}")
    dense = to_dense(adj).astype(np.int64)
    inner = dense[:u_size, :u_size]
    cross = dense[:u_size, u_size:]
    outer = dense[u_size:, u_size:]
    s_u = _dense_triangles(inner)
    cross_u = int((inner * (cross @ cross.T)).sum()) // 2
    cross_v = int(((cross @ outer) * cross).sum()) // 2
    q_v = _dense_triangles(outer)
    total = count_triangles(adj)
    if s_u + cross_u + cross_v + q_v != total:
        logger.error(f"Bipartite split {s_u}+{cross_u}+{cross_v}+{q_v} != {total} at |U|={u_size}")
        raise InvariantError("bipartite triangle decomposition does not sum to S")
    return BipartiteCounts(s_u=s_u, cross2U=cross_u, cross2V=cross_v, q_v=q_v, total=total)
