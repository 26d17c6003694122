#!/usr/bin/env python3
"""
Exact distribution of the triangle count for tiny n by exhaustive enumeration.

All 2^C(n,2) labelled graphs are visited in Gray-code order, so consecutive
graphs differ by one edge and the triangle count changes by the codegree of
that edge's endpoints. The enumeration only tallies how many graphs have m
edges and s triangles; that table does not depend on p and is cached, and
every exact pmf is a compensated sum over it.
"""

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from itertools import combinations
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, model_validator

from src.errors import ParameterError
from src.spectral import LatticeSpec

logger = logging.getLogger(__name__)

MAX_EXACT_N = 7
EXACT_SUM_TOL = 1e-12


class PmfTable(BaseModel):
    """Probability mass function of S_n over integer support"""
    n: int
    p: float
    support: List[int]
    probs: List[float]
    kind: Literal["exact", "empirical"]
    sample_count: int = 0
    counts: Optional[List[int]] = None

    @model_validator(mode='after')
    def validate_table(self):
        """Support sorted and in range, probabilities normalized

        Exact tables must sum to 1 within EXACT_SUM_TOL. Empirical tables are
        held to the integer identity Σ counts = sample_count, and each prob
        must be the float quotient counts[i] / sample_count.
        """
        if len(self.support) != len(self.probs):
            raise ValueError("support and probs differ in length")
        if not self.support:
            raise ValueError("empty support")
        if any(b <= a for a, b in zip(self.support, self.support[1:])):
            raise ValueError("support must be strictly increasing")
        top = math.comb(self.n, 3) if self.n >= 3 else 0
        if self.support[0] < 0 or self.support[-1] > top:
            raise ValueError(f"support outside [0, {top}]")
        if self.kind == "exact":
            if abs(math.fsum(self.probs) - 1.0) > EXACT_SUM_TOL:
                raise ValueError("probabilities do not sum to 1")
            return self
        if self.counts is None or len(self.counts) != len(self.support):
            raise ValueError("empirical tables need one count per support value")
        if min(self.counts) <= 0 or sum(self.counts) != self.sample_count:
            raise ValueError("empirical counts must be positive and sum to sample_count")
        if any(prob != count / self.sample_count for prob, count in zip(self.probs, self.counts)):
            raise ValueError("empirical probabilities must equal counts / sample_count")
        return self

    def prob(self, k: int) -> float:
        """Pr[S = k], zero off the support"""
        return self.as_dict().get(k, 0.0)

    def as_dict(self) -> Dict[int, float]:
        return dict(zip(self.support, self.probs))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"k": self.support, "prob": self.probs})

    def write_csv(self, path: Union[str, Path]) -> Path:
        """Two columns k, prob"""
        path = Path(path)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        logger.info(f"Wrote pmf table ({len(self.support)} rows) to {path}")
        return path

    def write_json(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(self.model_dump_json(indent=2) + "\n")
        logger.info(f"Wrote pmf table to {path}")
        return path

    @classmethod
    def read_json(cls, path: Union[str, Path]) -> "PmfTable":
        return cls.model_validate(json.loads(Path(path).read_text()))

    @classmethod
    def from_counts(cls, n: int, p: float, counts: np.ndarray) -> "PmfTable":
        """Empirical table from a histogram indexed by triangle count"""
        counts = np.asarray(counts, dtype=np.int64)
        support = np.nonzero(counts)[0]
        total = int(counts.sum())
        if total == 0:
            raise ParameterError("cannot build a pmf from zero samples")
        return cls(
            n=n,
            p=p,
            support=support.tolist(),
            probs=(counts[support] / total).tolist(),
            kind="empirical",
            sample_count=total,
            counts=counts[support].tolist(),
        )


class PmfStatistics(BaseModel):
    """Exact summary of a tabulated distribution"""
    mean: float
    variance: float
    mod_q_marginals: Dict[int, Dict[int, float]]


def _enumerate_shard(n: int, shard_bits: int, shard: int) -> np.ndarray:
    """Tally (edges, triangles) over the graphs whose top shard_bits mask bits equal shard"""
    pairs = list(combinations(range(n), 2))
    low = len(pairs) - shard_bits
    width = (math.comb(n, 3) if n >= 3 else 0) + 1
    tally = [0] * ((len(pairs) + 1) * width)
    nbr = [0] * n
    tri = 0
    m = 0
    for b in range(shard_bits):
        if (shard >> b) & 1:
            u, v = pairs[low + b]
            tri += (nbr[u] & nbr[v]).bit_count()
            nbr[u] |= 1 << v
            nbr[v] |= 1 << u
            m += 1
    tally[m * width + tri] += 1
    for i in range(1, 1 << low):
        u, v = pairs[(i & -i).bit_length() - 1]
        if (nbr[u] >> v) & 1:
            nbr[u] ^= 1 << v
            nbr[v] ^= 1 << u
            tri -= (nbr[u] & nbr[v]).bit_count()
            m -= 1
        else:
            tri += (nbr[u] & nbr[v]).bit_count()
            nbr[u] |= 1 << v
            nbr[v] |= 1 << u
            m += 1
        tally[m * width + tri] += 1
    return np.array(tally, dtype=np.int64).reshape(len(pairs) + 1, width)


def enumerate_counts(n: int, shards: int = 1, workers: int = 1) -> np.ndarray:
    """Number of labelled graphs on n vertices with m edges and s triangles

    Args:
        n: vertex count
        shards: power of two; shard j fixes the top log2(shards) mask bits to j
        workers: processes used to run shards

    Returns:
        int64 array indexed [m, s]; identical for every shard/worker count
    """
    if n < 1:
        raise ParameterError("n must be a positive integer")
    pair_count = math.comb(n, 2)
    shard_bits = shards.bit_length() - 1
    if shards < 1 or shards != 1 << shard_bits or shard_bits > pair_count:
        raise ParameterError(f"shards must be a power of two at most 2^{pair_count}")
    logger.info(f"Enumerating 2^{pair_count} graphs on {n} vertices in {shards} shard(s)")
    args = [(n, shard_bits, s) for s in range(shards)]
    if workers <= 1 or shards == 1:
        parts = [_enumerate_shard(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            parts = list(executor.map(_enumerate_shard, *zip(*args)))
    return np.sum(parts, axis=0)


@lru_cache(maxsize=16)
def _cached_counts(n: int) -> np.ndarray:
    table = enumerate_counts(n)
    table.setflags(write=False)
    return table


def exact_pmf(n: int, p: float, allow_large: bool = False) -> PmfTable:
    """Exact pmf of S_n by enumerating every graph on n vertices

    Args:
        n: vertex count, at most 7 unless allow_large
        p: edge probability in (0, 1)
        allow_large: lift the n <= 7 cost guard

    Raises:
        ParameterError: on invalid p or a refused enumeration size
    """
    if not 0.0 < p < 1.0:
        raise ParameterError(f"p must lie in the open interval (0, 1), got {p}")
    if n > MAX_EXACT_N and not allow_large:
        raise ParameterError(
            f"exact enumeration of 2^{math.comb(n, 2)} graphs refused for n={n} "
            f"(limit n <= {MAX_EXACT_N}; pass allow_large to override)"
        )
    table = _cached_counts(n)
    pair_count = table.shape[0] - 1
    weights = [p ** m * (1.0 - p) ** (pair_count - m) for m in range(pair_count + 1)]
    support, probs = [], []
    for s in range(table.shape[1]):
        column = table[:, s]
        if column.any():
            support.append(s)
            probs.append(math.fsum(int(c) * w for c, w in zip(column, weights) if c))
    return PmfTable(n=n, p=p, support=support, probs=probs, kind="exact")


def pmf_statistics(pmf: PmfTable, moduli: Iterable[int] = (2, 3)) -> PmfStatistics:
    """Mean, variance and residue marginals of a tabulated distribution"""
    mean = math.fsum(k * pr for k, pr in zip(pmf.support, pmf.probs))
    variance = math.fsum(pr * (k - mean) ** 2 for k, pr in zip(pmf.support, pmf.probs))
    marginals = {}
    for q in moduli:
        if q < 2:
            raise ParameterError(f"modulus must be at least 2, got {q}")
        marginals[q] = {
            a: math.fsum(pr for k, pr in zip(pmf.support, pmf.probs) if k % q == a)
            for a in range(q)
        }
    return PmfStatistics(mean=mean, variance=variance, mod_q_marginals=marginals)


def exact_charfun(pmf: PmfTable, lattice: LatticeSpec, t):
    """psi(t) = Σ_k Pr[S=k] exp(i t (k - a) / b)

    Accepts a scalar or an array of t; returns complex of the same shape.
    """
    k = np.asarray(pmf.support, dtype=np.float64)
    probs = np.asarray(pmf.probs)
    x = (k - lattice.a) / lattice.b
    t_arr = np.asarray(t, dtype=np.float64)
    values = np.exp(1j * np.multiply.outer(t_arr, x)) @ probs
    return complex(values) if t_arr.ndim == 0 else values


def total_variation(a: PmfTable, b: PmfTable) -> float:
    """Half the L1 distance between two tables"""
    da, db = a.as_dict(), b.as_dict()
    return 0.5 * math.fsum(abs(da.get(k, 0.0) - db.get(k, 0.0)) for k in set(da) | set(db))
