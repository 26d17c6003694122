#!/usr/bin/env python3
"""
Local limit law checks for the triangle count.

Compares sigma_n * Pr[S_n = k] with the standard normal density at the
lattice point x = (k - mu_n) / sigma_n, and checks the near-uniformity of
S_n modulo small q.
"""

import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, model_validator
from scipy.stats import norm

from src.errors import DomainError, ParameterError, UnderpoweredError
from src.graph_core import GraphParams
from src.moments import mean_triangles, variance_triangles
from src.oracle import PmfTable, pmf_statistics
from src.tri_count import triangle_count_stream

logger = logging.getLogger(__name__)

MARGIN_SIGMAS = 4.0
GAUSSIAN_PEAK = 1.0 / math.sqrt(2.0 * math.pi)


def empirical_pmf(params: GraphParams, samples: int, threads: int = 1,
                  batch_size: int = 256) -> PmfTable:
    """Frequency table of S_n over samples 0..samples-1

    Raises:
        ParameterError: if samples < 1
    """
    if samples < 1:
        raise ParameterError(f"samples must be at least 1, got {samples}")
    counts = triangle_count_stream(params, samples, threads=threads, batch_size=batch_size)
    return PmfTable.from_counts(params.n, params.p, np.bincount(counts))


def discrete_gaussian_reference(k, n: int, p: float):
    """N((k - mu_n) / sigma_n) / sigma_n, the predicted Pr[S_n = k]

    Accepts a scalar or an array of k.

    Raises:
        DomainError: if n < 4
    """
    if n < 4:
        raise DomainError(f"the Gaussian reference needs n >= 4, got n={n}")
    sigma = math.sqrt(variance_triangles(n, p))
    x = (np.asarray(k, dtype=np.float64) - mean_triangles(n, p)) / sigma
    value = norm.pdf(x) / sigma
    return float(value) if np.ndim(value) == 0 else value


class DiscrepancyPoint(BaseModel):
    k: int
    x: float
    empirical_scaled: float
    reference: float
    gap: float


class DiscrepancyReport(BaseModel):
    """sup over lattice points of |sigma_n p_n(x) - N(x)|"""
    n: int
    p: float
    kind: str
    sample_count: int
    sup_discrepancy: float
    argmax_k: int
    argmax_x: float
    mc_error_bound: float
    per_point: List[DiscrepancyPoint]

    @model_validator(mode='after')
    def validate_sup(self):
        """The sup is attained by one of the listed points"""
        if self.per_point and max(pt.gap for pt in self.per_point) != self.sup_discrepancy:
            raise ValueError("sup_discrepancy is not the largest per-point gap")
        return self

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([pt.model_dump() for pt in self.per_point])

    def write_json(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(self.model_dump_json(indent=2) + "\n")
        logger.info(f"Wrote discrepancy report to {path}")
        return path

    def write_csv(self, path: Union[str, Path]) -> Path:
        """Two columns x, gap"""
        path = Path(path)
        self.to_frame()[["x", "gap"]].to_csv(path, index=False, float_format="%.17g")
        return path


def _mc_error_bound(pmf: PmfTable, sigma: float) -> float:
    """sigma_n * max_k sqrt(q_k (1 - q_k) / m)

    q_k = (count_k + 1) / (m + 2) keeps the bound away from zero when a
    handful of samples put all their mass on one point.
    """
    if pmf.kind == "exact":
        return 0.0
    m = pmf.sample_count
    q = (np.asarray(pmf.counts, dtype=np.float64) + 1.0) / (m + 2.0)
    q = np.append(q, 1.0 / (m + 2.0))
    return float(sigma * np.sqrt(q * (1.0 - q) / m).max())


def check_power(n: int, p: float, samples: int) -> None:
    """Refuse a sample count that can never clear the error-bound threshold

    The bound of a finished run is at least the zero-count term, so this check
    runs before any sampling.

    Raises:
        ParameterError: if samples < 1
        UnderpoweredError: if even the zero-count term exceeds N(0)/2
    """
    if samples is None or samples < 1:
        raise ParameterError(f"samples must be at least 1, got {samples}")
    sigma = math.sqrt(variance_triangles(n, p))
    q = 1.0 / (samples + 2.0)
    floor = sigma * math.sqrt(q * (1.0 - q) / samples)
    if floor > GAUSSIAN_PEAK / 2.0:
        raise UnderpoweredError(
            f"{samples} samples at n={n} give an error bound of at least {floor:.4f}, "
            f"above N(0)/2 = {GAUSSIAN_PEAK / 2:.4f}"
        )


def sup_discrepancy(pmf: PmfTable, n: int, p: float,
                    margin_sigmas: float = MARGIN_SIGMAS) -> DiscrepancyReport:
    """Sup-norm distance between the scaled pmf and the normal density

    Every integer k from min(support) - ceil(margin*sigma_n) to
    max(support) + ceil(margin*sigma_n) is a lattice point of the report.

    Raises:
        ParameterError: if the pmf was built for other parameters
        DomainError: if n < 4
        UnderpoweredError: if the Monte Carlo error bound exceeds N(0)/2
    """
    if pmf.n != n or not math.isclose(pmf.p, p, rel_tol=1e-12):
        raise ParameterError(f"pmf is for (n={pmf.n}, p={pmf.p}), not (n={n}, p={p})")
    if n < 4:
        raise DomainError(f"the local limit comparison needs n >= 4, got n={n}")
    mu = mean_triangles(n, p)
    sigma = math.sqrt(variance_triangles(n, p))
    error_bound = _mc_error_bound(pmf, sigma)
    if error_bound > GAUSSIAN_PEAK / 2.0:
        logger.error(f"Refusing discrepancy at n={n}: error bound {error_bound:.4f} "
                     f"from {pmf.sample_count} samples")
        raise UnderpoweredError(
            f"Monte Carlo error bound {error_bound:.4f} exceeds N(0)/2 = {GAUSSIAN_PEAK / 2:.4f}; "
            f"increase the sample count"
        )

    margin = math.ceil(margin_sigmas * sigma)
    k = np.arange(pmf.support[0] - margin, pmf.support[-1] + margin + 1)
    probs = np.zeros(k.size)
    probs[np.asarray(pmf.support) - k[0]] = pmf.probs
    x = (k - mu) / sigma
    scaled = sigma * probs
    reference = norm.pdf(x)
    gaps = np.abs(scaled - reference)
    best = int(np.argmax(gaps))

    report = DiscrepancyReport(
        n=n,
        p=p,
        kind=pmf.kind,
        sample_count=pmf.sample_count,
        sup_discrepancy=float(gaps[best]),
        argmax_k=int(k[best]),
        argmax_x=float(x[best]),
        mc_error_bound=error_bound,
        per_point=[
            DiscrepancyPoint(k=int(kk), x=float(xx), empirical_scaled=float(s),
                             reference=float(r), gap=float(g))
            for kk, xx, s, r, g in zip(k, x, scaled, reference, gaps)
        ],
    )
    logger.info(f"Discrepancy at n={n}, p={p}: {report.sup_discrepancy:.6g} at k={report.argmax_k} "
                f"(error bound {error_bound:.3g})")
    return report


class TrendRow(BaseModel):
    n: int
    sup_discrepancy: float
    mc_error_bound: float


class TrendReport(BaseModel):
    """Discrepancy across increasing n"""
    rows: List[TrendRow]
    combined_error: float
    decreasing: bool
    strictly_monotone: bool

    def write_jsonl(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        with path.open("w") as handle:
            for row in self.rows:
                handle.write(json.dumps(row.model_dump()) + "\n")
        return path


def discrepancy_trend(reports: Sequence[DiscrepancyReport]) -> TrendReport:
    """Check that the discrepancy shrinks from the smallest to the largest n

    decreasing holds when the last value sits more than three combined
    standard errors below the first; strictly_monotone is reported only.
    """
    if len(reports) < 2:
        raise ParameterError("a trend needs at least two reports")
    ordered = sorted(reports, key=lambda r: r.n)
    first, last = ordered[0], ordered[-1]
    combined = math.hypot(first.mc_error_bound, last.mc_error_bound)
    decreasing = last.sup_discrepancy < first.sup_discrepancy - 3.0 * combined
    monotone = all(b.sup_discrepancy < a.sup_discrepancy for a, b in zip(ordered, ordered[1:]))
    if not monotone:
        logger.warning("Discrepancy is not strictly decreasing across the sweep")
    return TrendReport(
        rows=[TrendRow(n=r.n, sup_discrepancy=r.sup_discrepancy, mc_error_bound=r.mc_error_bound)
              for r in ordered],
        combined_error=combined,
        decreasing=decreasing,
        strictly_monotone=monotone,
    )


class ModQReport(BaseModel):
    """Residues of S_n modulo q

    Sampled reports carry the integer tallies; freqs are their quotients by
    sample_count, so the tallies are what sums exactly to the sample count.
    """
    n: int
    p: float
    q: int
    sample_count: int
    freqs: Dict[int, float]
    max_dev: float
    tallies: Optional[Dict[int, int]] = None

    @model_validator(mode='after')
    def validate_tallies(self):
        if self.tallies is None:
            return self
        if sorted(self.tallies) != list(range(self.q)) or sum(self.tallies.values()) != self.sample_count:
            raise ValueError("residue tallies must cover 0..q-1 and sum to sample_count")
        if any(self.freqs.get(a) != c / self.sample_count for a, c in self.tallies.items()):
            raise ValueError("residue frequencies must equal tallies / sample_count")
        return self


def _check_modulus(q: int) -> None:
    if q < 2:
        raise ParameterError(f"modulus must be at least 2, got {q}")


def mod_q_histogram(params: GraphParams, samples: int, q: int, threads: int = 1,
                    batch_size: int = 256) -> ModQReport:
    """Sampled residue frequencies and max_a |freq[a] - 1/q|"""
    _check_modulus(q)
    if samples < 1:
        raise ParameterError(f"samples must be at least 1, got {samples}")
    counts = triangle_count_stream(params, samples, threads=threads, batch_size=batch_size)
    tally = np.bincount(counts % q, minlength=q)
    tallies = {a: int(tally[a]) for a in range(q)}
    freqs = {a: c / samples for a, c in tallies.items()}
    return ModQReport(
        n=params.n,
        p=params.p,
        q=q,
        sample_count=samples,
        freqs=freqs,
        max_dev=max(abs(f - 1.0 / q) for f in freqs.values()),
        tallies=tallies,
    )


def mod_q_from_pmf(pmf: PmfTable, q: int) -> ModQReport:
    """Residue marginals of a tabulated distribution"""
    _check_modulus(q)
    freqs = pmf_statistics(pmf, moduli=(q,)).mod_q_marginals[q]
    return ModQReport(
        n=pmf.n,
        p=pmf.p,
        q=q,
        sample_count=pmf.sample_count,
        freqs=freqs,
        max_dev=max(abs(f - 1.0 / q) for f in freqs.values()),
    )
