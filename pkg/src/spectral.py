#!/usr/bin/env python3
"""
Characteristic functions of the standardized triangle count.

Covers Monte Carlo estimation of psi_n(t) = E[exp(i t R_n)], lattice Fourier
inversion, the Bernoulli modulus bound with its grid certification, and the
decay profile over the three t-regions:

    R1 = |t| < A,  R2 = A <= |t| < n^0.55,  R3 = n^0.55 <= |t| <= pi*sigma_n
"""

import logging
import math
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Literal, NamedTuple, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, field_validator, model_validator
from scipy.integrate import simpson, trapezoid

from src.errors import DomainError, NumericalError, ParameterError
from src.moments import mean_triangles, variance_triangles

logger = logging.getLogger(__name__)

DEFAULT_A = 3.0
DEFAULT_D = 10.0
DEFAULT_DELTA = 0.01
TAIL_EXPONENT = 50
R2_EXPONENT = 0.55
BOUND_TOLERANCE = 1e-12
ON_LATTICE_TOLERANCE = 1e-9

Region = Literal["R1", "R2", "R3", "OUT"]


class LatticeSpec(BaseModel):
    """The lattice {(k - a) / b : k integer}"""
    a: float
    b: float

    @field_validator('b')
    def validate_b(cls, v):
        """Scale must be positive"""
        if not v > 0:
            raise ValueError("lattice scale b must be positive")
        return v

    @classmethod
    def for_model(cls, n: int, p: float) -> "LatticeSpec":
        """a = p^3 C(n,3), b = sigma_n"""
        return cls(a=mean_triangles(n, p), b=math.sqrt(variance_triangles(n, p)))

    def point(self, k):
        """Lattice point of integer k"""
        return (np.asarray(k, dtype=np.float64) - self.a) / self.b

    def index(self, y: float) -> float:
        """Real k with point(k) = y"""
        return y * self.b + self.a

    def contains(self, y: float) -> bool:
        k = self.index(y)
        return abs(k - round(k)) < ON_LATTICE_TOLERANCE


def region_of(t: float, n: int, p: float, a_boundary: float = DEFAULT_A) -> Region:
    """Label t by region; OUT means |t| > pi*sigma_n"""
    at = abs(t)
    if at < a_boundary:
        return "R1"
    if at < n ** R2_EXPONENT:
        return "R2"
    if at <= math.pi * math.sqrt(variance_triangles(n, p)):
        return "R3"
    return "OUT"


class CharFunProfile(BaseModel):
    """Monte Carlo estimates of psi_n on a grid of t values"""
    n: int
    p: float
    sample_count: int
    a_boundary: float = DEFAULT_A
    t_values: List[float]
    re: List[float]
    im: List[float]
    std_errors: List[float]
    region_labels: List[str]

    @model_validator(mode='after')
    def validate_columns(self):
        """All per-point columns have the grid's length"""
        size = len(self.t_values)
        for name in ("re", "im", "std_errors", "region_labels"):
            if len(getattr(self, name)) != size:
                raise ValueError(f"column {name} does not match t_values")
        return self

    @property
    def estimates(self) -> np.ndarray:
        return np.asarray(self.re) + 1j * np.asarray(self.im)

    def to_frame(self) -> pd.DataFrame:
        est = self.estimates
        return pd.DataFrame({
            "t": self.t_values,
            "re": est.real,
            "im": est.imag,
            "abs": np.abs(est),
            "stderr": self.std_errors,
            "region": self.region_labels,
        })

    def write_csv(self, path: Union[str, Path]) -> Path:
        """Columns t, re, im, abs, stderr, region"""
        path = Path(path)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        logger.info(f"Wrote charfun profile ({len(self.t_values)} points) to {path}")
        return path


class CharFunAccumulator:
    """Running Σ cos(t r) and Σ sin(t r) for a fixed t grid; merges by addition"""

    CHUNK = 65536

    def __init__(self, t_grid: Iterable[float]):
        self.t = np.asarray(list(t_grid), dtype=np.float64)
        if self.t.size == 0:
            raise ParameterError("t grid is empty")
        self.count = 0
        self._cos = np.zeros(self.t.size)
        self._sin = np.zeros(self.t.size)

    def update(self, values) -> "CharFunAccumulator":
        r = np.atleast_1d(np.asarray(values, dtype=np.float64))
        for start in range(0, r.size, self.CHUNK):
            phase = np.multiply.outer(self.t, r[start:start + self.CHUNK])
            self._cos += np.cos(phase).sum(axis=1)
            self._sin += np.sin(phase).sum(axis=1)
        self.count += r.size
        return self

    def merge(self, other: "CharFunAccumulator") -> "CharFunAccumulator":
        if not np.array_equal(self.t, other.t):
            raise ParameterError("cannot merge accumulators over different t grids")
        merged = CharFunAccumulator(self.t)
        merged.count = self.count + other.count
        merged._cos = self._cos + other._cos
        merged._sin = self._sin + other._sin
        return merged

    def estimates(self) -> np.ndarray:
        if self.count == 0:
            raise ParameterError("no values were accumulated")
        return (self._cos + 1j * self._sin) / self.count


def empirical_charfun(r_values: Union[np.ndarray, Iterable], t_grid: Iterable[float], *,
                      n: int, p: float, a_boundary: float = DEFAULT_A) -> CharFunProfile:
    """Estimate psi_n on t_grid from standardized samples

    Args:
        r_values: array or iterable of arrays of standardized counts
        t_grid: evaluation points
        n, p: graph model, used for region labels
        a_boundary: the R1/R2 boundary A

    Returns:
        CharFunProfile with the 1/sqrt(m) standard error bound per point

    Raises:
        ParameterError: on an empty stream
    """
    acc = CharFunAccumulator(t_grid)
    if isinstance(r_values, np.ndarray):
        acc.update(r_values)
    else:
        for chunk in r_values:
            acc.update(chunk)
    if acc.count == 0:
        raise ParameterError("empirical_charfun needs a nonempty stream")
    est = acc.estimates()
    se = 1.0 / math.sqrt(acc.count)
    return CharFunProfile(
        n=n,
        p=p,
        sample_count=acc.count,
        a_boundary=a_boundary,
        t_values=acc.t.tolist(),
        re=est.real.tolist(),
        im=est.imag.tolist(),
        std_errors=[se] * acc.t.size,
        region_labels=[region_of(t, n, p, a_boundary) for t in acc.t],
    )


def gaussian_charfun(t):
    """exp(-t^2 / 2)"""
    value = np.exp(-np.square(t) / 2.0)
    return float(value) if np.ndim(value) == 0 else value


class InversionResult(BaseModel):
    """Point probability recovered by lattice inversion"""
    probability: float
    imag_residue: float
    points: int

    def __float__(self) -> float:
        return self.probability


def _evaluate(charfun: Callable, t: np.ndarray) -> np.ndarray:
    values = np.asarray(charfun(t), dtype=np.complex128)
    if values.shape != t.shape:
        values = np.array([complex(charfun(x)) for x in t])
    return values


def invert_charfun(charfun: Callable, lattice: LatticeSpec, y: float,
                   quadrature_points: int = 257, tolerance: float = 1e-10,
                   max_points: int = 2 ** 16 + 1) -> InversionResult:
    """Pr(Y = y) = (1 / 2 pi b) ∫_{-pi b}^{pi b} exp(-i t y) psi(t) dt

    Composite Simpson, doubling the interval count until successive values
    differ by less than tolerance.

    Args:
        charfun: t -> psi(t), preferably vectorized
        lattice: (a, b) of the lattice carrying Y
        y: a lattice point
        quadrature_points: initial number of nodes (made odd)

    Raises:
        DomainError: if y is not on the lattice
        NumericalError: if refinement does not converge within max_points
    """
    if not lattice.contains(y):
        raise DomainError(f"y={y} is not a point of the lattice (a={lattice.a}, b={lattice.b})")
    if quadrature_points < 3:
        raise ParameterError("need at least 3 quadrature points")
    half_width = math.pi * lattice.b
    scale = 1.0 / (2.0 * math.pi * lattice.b)

    def integrate(points: int) -> complex:
        t = np.linspace(-half_width, half_width, points)
        return complex(simpson(np.exp(-1j * t * y) * _evaluate(charfun, t), x=t)) * scale

    points = quadrature_points | 1
    previous = integrate(points)
    while points < max_points:
        points = 2 * (points - 1) + 1
        current = integrate(points)
        if abs(current - previous) < tolerance:
            logger.debug(f"Inversion at y={y} converged with {points} points")
            return InversionResult(probability=current.real, imag_residue=abs(current.imag),
                                   points=points)
        previous = current
    logger.error(f"Inversion at y={y} did not converge within {max_points} points")
    raise NumericalError(f"lattice inversion did not converge to {tolerance} at y={y}")


def nearest_integer_distance(x):
    """||x||, the distance from x to the nearest integer, in [0, 0.5]"""
    value = np.abs(np.asarray(x, dtype=np.float64) - np.round(x))
    return float(value) if value.ndim == 0 else value


class BernoulliBound(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


def bernoulli_bound_check(p: float, theta: float) -> BernoulliBound:
    """|p + (1-p) e^{i theta}| <= 1 - 8 p (1-p) ||theta / 2 pi||^2"""
    lhs = abs(p + (1.0 - p) * complex(math.cos(theta), math.sin(theta)))
    rhs = 1.0 - 8.0 * p * (1.0 - p) * nearest_integer_distance(theta / (2.0 * math.pi)) ** 2
    return BernoulliBound(lhs=lhs, rhs=rhs, holds=lhs <= rhs + BOUND_TOLERANCE)


class Certification(BaseModel):
    """Outcome of checking an inequality on a grid"""
    points: int
    violations: int
    worst_slack: float


def certify_bernoulli_bound(p_values: Iterable[float], theta_values: Iterable[float]) -> Certification:
    """Check the Bernoulli bound on the product grid p_values x theta_values"""
    p = np.asarray(list(p_values), dtype=np.float64)[:, np.newaxis]
    theta = np.asarray(list(theta_values), dtype=np.float64)[np.newaxis, :]
    lhs = np.abs(p + (1.0 - p) * np.exp(1j * theta))
    rhs = 1.0 - 8.0 * p * (1.0 - p) * nearest_integer_distance(theta / (2.0 * np.pi)) ** 2
    slack = rhs - lhs
    result = Certification(
        points=int(slack.size),
        violations=int(np.count_nonzero(slack < -BOUND_TOLERANCE)),
        worst_slack=float(slack.min()),
    )
    logger.info(f"Bernoulli bound: {result.violations} violations over {result.points} points")
    return result


def certify_cosine_bound(t_values: Iterable[float]) -> Certification:
    """Check cos(t) <= 1 - 8 ||t / 2 pi||^2 for t in [-pi, pi]"""
    t = np.asarray(list(t_values), dtype=np.float64)
    if np.any(np.abs(t) > np.pi):
        raise ParameterError("the cosine bound is stated for t in [-pi, pi]")
    slack = 1.0 - 8.0 * nearest_integer_distance(t / (2.0 * np.pi)) ** 2 - np.cos(t)
    return Certification(
        points=int(slack.size),
        violations=int(np.count_nonzero(slack < -BOUND_TOLERANCE)),
        worst_slack=float(slack.min()),
    )


def matching_heuristic_bound(t: float, n: int, p: float) -> float:
    """(1 - 8p(1-p) ||t n p^2 / (2 pi sigma_n)||^2)^{n/2}

    The modulus a single revealed perfect matching would give if every
    matching edge closed exactly n p^2 two-paths.
    """
    sigma = math.sqrt(variance_triangles(n, p))
    x = nearest_integer_distance(t * n * p * p / (2.0 * math.pi * sigma))
    return (1.0 - 8.0 * p * (1.0 - p) * x * x) ** (n / 2.0)


class DecayRow(BaseModel):
    region: str
    t: float
    abs_psi: float
    std_error: float
    noise_floor: float
    gaussian: float
    clt_gap: Optional[float] = None
    bound_r2: Optional[float] = None
    bound_r3: Optional[float] = None
    matching_heuristic: Optional[float] = None
    verdict: Literal["clt", "pass", "fail", "inconclusive"]


class DecayTable(BaseModel):
    """A profile annotated with the decay bounds that apply to each point"""
    n: int
    p: float
    sample_count: int
    d_constant: float
    delta: float
    rows: List[DecayRow]

    def verdict_counts(self) -> Dict[str, int]:
        counts = {"clt": 0, "pass": 0, "fail": 0, "inconclusive": 0}
        for row in self.rows:
            counts[row.verdict] += 1
        return counts

    @property
    def failures(self) -> List[DecayRow]:
        return [row for row in self.rows if row.verdict == "fail"]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([row.model_dump() for row in self.rows])

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        return path


def decay_profile(profile: CharFunProfile, d_constant: float = DEFAULT_D,
                  delta: float = DEFAULT_DELTA, noise_sigmas: float = 3.0) -> DecayTable:
    """Annotate each grid point with the applicable decay bound

    R1 points are compared with exp(-t^2/2). Elsewhere the point fails only
    when |psi| exceeds D/|t|^{1+delta} + noise_sigmas*stderr while that bound
    sits above the noise floor noise_sigmas/sqrt(m); estimates below the noise
    floor are inconclusive. The D/|t|^50 curve is reported, never asserted.
    """
    if profile.sample_count < 100_000:
        logger.warning(f"Decay profile from {profile.sample_count} samples; "
                       f"noise floor {noise_sigmas / math.sqrt(profile.sample_count):.4f}")
    rows = []
    floor = noise_sigmas / math.sqrt(profile.sample_count)
    for t, est, se, region in zip(profile.t_values, profile.estimates,
                                  profile.std_errors, profile.region_labels):
        magnitude = float(abs(est))
        gauss = gaussian_charfun(t)
        if region == "R1":
            rows.append(DecayRow(region=region, t=t, abs_psi=magnitude, std_error=se,
                                 noise_floor=floor, gaussian=gauss,
                                 clt_gap=float(abs(est - gauss)), verdict="clt"))
            continue
        bound_r2 = d_constant / abs(t) ** (1.0 + delta)
        bound_r3 = d_constant / abs(t) ** TAIL_EXPONENT
        if magnitude > bound_r2 + noise_sigmas * se:
            verdict = "fail" if bound_r2 > floor else "inconclusive"
        elif magnitude < floor:
            verdict = "inconclusive"
        else:
            verdict = "pass"
        rows.append(DecayRow(
            region=region, t=t, abs_psi=magnitude, std_error=se, noise_floor=floor,
            gaussian=gauss, bound_r2=bound_r2, bound_r3=bound_r3,
            matching_heuristic=matching_heuristic_bound(t, profile.n, profile.p),
            verdict=verdict,
        ))
    table = DecayTable(n=profile.n, p=profile.p, sample_count=profile.sample_count,
                       d_constant=d_constant, delta=delta, rows=rows)
    if table.failures:
        logger.warning(f"{len(table.failures)} grid point(s) exceed the decay bound")
    return table


def integrated_gap(profile: CharFunProfile) -> Dict[str, float]:
    """Trapezoid estimate of ∫ |psi(t) - exp(-t^2/2)| dt over each region's grid points"""
    t = np.asarray(profile.t_values)
    gap = np.abs(profile.estimates - gaussian_charfun(t))
    labels = np.asarray(profile.region_labels)
    out = {}
    for region in ("R1", "R2", "R3"):
        mask = labels == region
        if np.count_nonzero(mask) < 2:
            out[region] = 0.0
            continue
        order = np.argsort(t[mask])
        out[region] = float(trapezoid(gap[mask][order], x=t[mask][order]))
    return out


def t_grid_from_spec(spec: str) -> np.ndarray:
    """Parse a t grid

    Accepted forms: "start:stop:step" (stop included), "log:start:stop:count"
    (geometric spacing), or a comma-separated list of numbers.
    """
    text = spec.strip()
    try:
        if text.startswith("log:"):
            _, start, stop, count = text.split(":")
            if float(start) <= 0 or float(stop) <= 0 or int(count) < 1:
                raise ParameterError("log grid needs positive bounds and count")
            return np.geomspace(float(start), float(stop), int(count))
        if ":" in text:
            start, stop, step = (float(part) for part in text.split(":"))
            if step <= 0 or stop < start:
                raise ParameterError("range grid needs start <= stop and a positive step")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            return start + step * np.arange(count)
        return np.asarray([float(part) for part in text.split(",")])
    except ValueError as e:
        if isinstance(e, ParameterError):
            raise
        raise ParameterError(f"Malformed t grid {spec!r}: {e}")
