#!/usr/bin/env python3
"""
Seedable G(n,p) sampling into bit-packed adjacency rows.

Every sample is driven by a Philox counter-based stream keyed by
(seed, sample_index), so a graph depends only on its parameters and never on
how samples are scheduled across workers. Rows are packed little-endian into
64-bit words; padding bits past column n-1 are always zero.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, List, Tuple, TypeVar, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from src.errors import ParameterError

logger = logging.getLogger(__name__)

WORD_BITS = 64

T = TypeVar("T")


class GraphParams(BaseModel):
    """Parameters identifying one G(n,p) sample"""
    model_config = ConfigDict(frozen=True)

    n: int
    p: float
    seed: int = 0
    sample_index: int = 0

    def __init__(self, **data):
        try:
            super().__init__(**data)
        except ValidationError as e:
            raise ParameterError(f"invalid graph parameters: {e}") from e

    @field_validator('n')
    def validate_n(cls, v):
        """At least one vertex"""
        if v < 1:
            raise ValueError("n must be a positive integer")
        return v

    @field_validator('p')
    def validate_p(cls, v):
        """Edge probability lies in the open unit interval"""
        if not 0.0 < v < 1.0:
            raise ValueError("p must lie in the open interval (0, 1)")
        return v

    @field_validator('seed', 'sample_index')
    def validate_u64(cls, v):
        """Seed and counter are unsigned 64-bit"""
        if not 0 <= v < 2**64:
            raise ValueError("must fit in 64 unsigned bits")
        return v

    def at(self, sample_index: int) -> "GraphParams":
        """Same graph model, different sample counter"""
        return GraphParams(n=self.n, p=self.p, seed=self.seed, sample_index=sample_index)


@dataclass(frozen=True)
class BitAdjacency:
    """Symmetric, zero-diagonal adjacency matrix packed into uint64 rows

    rows has shape (n, words); bit j of word w in row i is the indicator of
    edge {i, w*64 + j}. Instances are read-only and safe to share across threads.
    """
    n: int
    rows: np.ndarray

    def __post_init__(self):
        if self.rows.shape != (self.n, word_count(self.n)):
            raise ParameterError(
                f"rows shape {self.rows.shape} does not match n={self.n}"
            )
        self.rows.setflags(write=False)

    @property
    def words(self) -> int:
        return self.rows.shape[1]

    def has_edge(self, u: int, v: int) -> bool:
        """Whether {u, v} is an edge"""
        _check_vertex(self.n, u)
        _check_vertex(self.n, v)
        return bool((int(self.rows[u, v // WORD_BITS]) >> (v % WORD_BITS)) & 1)

    def degree(self, u: int) -> int:
        _check_vertex(self.n, u)
        return int(np.bitwise_count(self.rows[u]).sum())

    def __eq__(self, other):
        if not isinstance(other, BitAdjacency):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.rows, other.rows)

    def __hash__(self):
        return hash((self.n, self.rows.tobytes()))


EdgeSet = Union[BitAdjacency, Iterable[Tuple[int, int]]]


def word_count(n: int) -> int:
    """Number of 64-bit words per packed row (at least one)"""
    return max(1, -(-n // WORD_BITS))


def pack_rows(dense: np.ndarray) -> np.ndarray:
    """Pack boolean matrices (..., n, n) into uint64 rows (..., n, words)"""
    n = dense.shape[-1]
    words = word_count(n)
    padded = np.zeros(dense.shape[:-1] + (words * WORD_BITS,), dtype=bool)
    padded[..., :n] = dense
    packed = np.packbits(padded, axis=-1, bitorder='little')
    return np.ascontiguousarray(packed).view('<u8')


def unpack_rows(rows: np.ndarray, n: int) -> np.ndarray:
    """Inverse of pack_rows"""
    raw = np.ascontiguousarray(rows).view(np.uint8)
    return np.unpackbits(raw, axis=-1, bitorder='little')[..., :n].astype(bool)


def _check_vertex(n: int, u: int) -> None:
    if not 0 <= u < n:
        raise ParameterError(f"vertex {u} out of range for n={n}")


def counter_generator(seed: int, sample_index: int) -> np.random.Generator:
    """Philox stream for one sample; the 128-bit key is (sample_index, seed)"""
    return np.random.Generator(np.random.Philox(key=(sample_index << 64) | seed))


def _sample_dense(n: int, p: float, seed: int, sample_index: int,
                  out: np.ndarray) -> None:
    """Fill out (n, n) with one symmetric sample; pairs drawn in row-major order"""
    iu, iv = np.triu_indices(n, 1)
    present = counter_generator(seed, sample_index).random(iu.size) < p
    out[:] = False
    out[iu, iv] = present
    out[iv, iu] = present


def sample_gnp(params: GraphParams) -> BitAdjacency:
    """Sample G(n,p) for the given parameters

    Args:
        params: n, p, seed and sample counter

    Returns:
        The sampled graph; identical for identical params
    """
    dense = np.empty((params.n, params.n), dtype=bool)
    _sample_dense(params.n, params.p, params.seed, params.sample_index, dense)
    return BitAdjacency(params.n, pack_rows(dense))


def sample_batch(params: GraphParams, start_index: int, count: int) -> np.ndarray:
    """Sample consecutive sample indices into a stacked packed array

    Graph i of the batch equals sample_gnp(params.at(start_index + i)).

    Args:
        params: graph model (its sample_index is ignored)
        start_index: first sample counter
        count: number of graphs

    Returns:
        uint64 array of shape (count, n, words)
    """
    if count < 0 or start_index < 0:
        raise ParameterError("start_index and count must be nonnegative")
    dense = np.empty((count, params.n, params.n), dtype=bool)
    for i in range(count):
        _sample_dense(params.n, params.p, params.seed, start_index + i, dense[i])
    return pack_rows(dense)


def from_edges(n: int, edges: Iterable[Tuple[int, int]]) -> BitAdjacency:
    """Build an adjacency from an explicit list of unordered pairs"""
    if n < 1:
        raise ParameterError("n must be a positive integer")
    dense = np.zeros((n, n), dtype=bool)
    for u, v in edges:
        _check_vertex(n, u)
        _check_vertex(n, v)
        if u == v:
            raise ParameterError(f"self-loop {{{u}, {v}}} is not an edge")
        dense[u, v] = dense[v, u] = True
    return BitAdjacency(n, pack_rows(dense))


def from_dense(dense: np.ndarray) -> BitAdjacency:
    """Build an adjacency from a boolean matrix; the upper triangle is authoritative"""
    dense = np.asarray(dense, dtype=bool)
    n = dense.shape[0]
    upper = np.triu(dense, 1)
    return BitAdjacency(n, pack_rows(upper | upper.T))


def to_dense(adj: BitAdjacency) -> np.ndarray:
    return unpack_rows(adj.rows, adj.n)


def empty_graph(n: int) -> BitAdjacency:
    return from_edges(n, [])


def complete_graph(n: int) -> BitAdjacency:
    return from_dense(np.ones((n, n), dtype=bool))


def cycle_graph(n: int) -> BitAdjacency:
    return from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def edges(adj: BitAdjacency) -> List[Tuple[int, int]]:
    """Edges as sorted (u, v) pairs with u < v"""
    iu, iv = np.nonzero(np.triu(to_dense(adj), 1))
    return list(zip(iu.tolist(), iv.tolist()))


def edge_count(adj: BitAdjacency) -> int:
    return int(np.bitwise_count(adj.rows).sum()) // 2


def as_edge_mask(n: int, keep: EdgeSet) -> BitAdjacency:
    """Normalize an edge set (pairs or adjacency) to a BitAdjacency on n vertices"""
    if isinstance(keep, BitAdjacency):
        if keep.n != n:
            raise ParameterError(f"edge mask has n={keep.n}, expected {n}")
        return keep
    return from_edges(n, keep)


def codegree(adj: BitAdjacency, u: int, v: int) -> int:
    """Number of common neighbours |N(u) ∩ N(v)|

    Raises:
        ParameterError: if u == v or either vertex is out of range
    """
    _check_vertex(adj.n, u)
    _check_vertex(adj.n, v)
    if u == v:
        raise ParameterError("codegree needs two distinct vertices")
    return int(np.bitwise_count(adj.rows[u] & adj.rows[v]).sum())


def restrict_to_edge_set(adj: BitAdjacency, keep: EdgeSet) -> BitAdjacency:
    """Keep only the edges of adj that lie in keep"""
    mask = as_edge_mask(adj.n, keep)
    return BitAdjacency(adj.n, adj.rows & mask.rows)


def complement_mask(mask: BitAdjacency) -> BitAdjacency:
    """All pairs of K_n not in mask (zero diagonal and padding preserved)"""
    full = complete_graph(mask.n)
    return BitAdjacency(mask.n, full.rows & ~mask.rows)


def dump_graph(adj: BitAdjacency) -> str:
    """Serialize to the debug fixture format

    First line is n; line i+1 is the hex value whose bit j (j < i) is edge {i, j}.
    """
    dense = to_dense(adj)
    lines = [str(adj.n)]
    for i in range(adj.n):
        value = 0
        for j in np.nonzero(dense[i, :i])[0].tolist():
            value |= 1 << j
        lines.append(format(value, 'x'))
    return "\n".join(lines) + "\n"


def load_graph(text: str) -> BitAdjacency:
    """Parse the debug fixture format written by dump_graph"""
    lines = [line.strip() for line in text.strip().splitlines()]
    try:
        n = int(lines[0])
        values = [int(line, 16) for line in lines[1:]]
    except (IndexError, ValueError) as e:
        raise ParameterError(f"Malformed graph dump: {e}")
    if len(values) != n:
        raise ParameterError(f"Graph dump declares n={n} but has {len(values)} rows")
    pairs = []
    for i, value in enumerate(values):
        if value >> i:
            raise ParameterError(f"Row {i} has bits at or above the diagonal")
        pairs.extend((i, j) for j in range(i) if (value >> j) & 1)
    return from_edges(n, pairs)


def batch_bounds(total: int, batch_size: int) -> List[Tuple[int, int]]:
    """Split [0, total) into (start, count) chunks of at most batch_size"""
    if batch_size < 1:
        raise ParameterError("batch_size must be positive")
    return [(start, min(batch_size, total - start)) for start in range(0, total, batch_size)]


def map_batches(fn: Callable[[int, int], T], total: int, batch_size: int,
                threads: int = 1) -> List[T]:
    """Apply fn(start, count) over batches, results in batch order

    The chunking depends only on total and batch_size, so the ordered result
    list is the same for any thread count.
    """
    bounds = batch_bounds(total, batch_size)
    logger.debug(f"Running {len(bounds)} batches on {threads} thread(s)")
    if threads <= 1 or len(bounds) <= 1:
        return [fn(start, count) for start, count in bounds]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(lambda b: fn(*b), bounds))
