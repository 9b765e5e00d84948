"""Foundational numeric types: points, feasible sets, problems, run traces.

Points are plain 1-D float64 numpy arrays. Everything here is an immutable
value after construction and all operations are pure functions, so these
types are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.typing import NDArray

Point = NDArray[np.float64]

MEMBERSHIP_TOL = 1e-9


class ContractError(ValueError):
    """A documented precondition was violated by the caller."""


class InvalidSetError(ValueError):
    """A feasible set was constructed with inconsistent data."""


class UnsupportedCapabilityError(RuntimeError):
    """The requested operation is not available for this object."""


class ToleranceNotReachedError(RuntimeError):
    """An iterative subsolver stopped before certifying the requested tolerance."""

    def __init__(self, message: str, gap: float):
        super().__init__(message)
        self.gap = gap


class GuaranteeViolationError(RuntimeError):
    """A per-run theoretical bound failed; indicates a bug or a bad constant."""


def as_point(x, n: Optional[int] = None) -> Point:
    """Validate and convert ``x`` to a finite 1-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ContractError(f"point must be 1-D, got shape {arr.shape}")
    if arr.size < 1:
        raise ContractError("point must have dimension >= 1")
    if not np.all(np.isfinite(arr)):
        raise ContractError("point has non-finite coordinates")
    if n is not None and arr.size != n:
        raise ContractError(f"dimension mismatch: expected {n}, got {arr.size}")
    return arr


def distance_sq(a, b) -> float:
    """Squared Euclidean distance sum_i (a_i - b_i)^2."""
    a = as_point(a)
    b = as_point(b, n=a.size)
    d = a - b
    return float(d @ d)


class FeasibleSet:
    """Closed convex constraint set with exact Euclidean projection."""

    n: int

    def project(self, z: Point) -> Point:
        raise NotImplementedError

    def contains(self, x: Point, tol: float = MEMBERSHIP_TOL) -> bool:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, scale: float = 1.0) -> Point:
        """Draw a random member, used by property tests and diagnostics."""
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class FullSpace(FeasibleSet):
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise InvalidSetError("dimension must be >= 1")

    def project(self, z: Point) -> Point:
        return as_point(z, n=self.n).copy()

    def contains(self, x: Point, tol: float = MEMBERSHIP_TOL) -> bool:
        return as_point(x, n=self.n).size == self.n

    def sample(self, rng: np.random.Generator, scale: float = 1.0) -> Point:
        return scale * rng.standard_normal(self.n)


@dataclass(frozen=True, eq=False)
class Box(FeasibleSet):
    lower: Point
    upper: Point

    def __post_init__(self):
        lo = as_point(self.lower)
        hi = as_point(self.upper, n=lo.size)
        if np.any(lo > hi):
            raise InvalidSetError("box has lower > upper in some coordinate")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "n", lo.size)

    def project(self, z: Point) -> Point:
        return np.clip(as_point(z, n=self.n), self.lower, self.upper)

    def contains(self, x: Point, tol: float = MEMBERSHIP_TOL) -> bool:
        x = as_point(x, n=self.n)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def sample(self, rng: np.random.Generator, scale: float = 1.0) -> Point:
        return rng.uniform(self.lower, self.upper)


@dataclass(frozen=True, eq=False)
class Ball(FeasibleSet):
    center: Point
    radius: float

    def __post_init__(self):
        c = as_point(self.center)
        if not self.radius > 0:
            raise InvalidSetError("ball radius must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "n", c.size)

    def project(self, z: Point) -> Point:
        d = as_point(z, n=self.n) - self.center
        norm = float(np.linalg.norm(d))
        if norm <= self.radius:
            return self.center + d
        return self.center + d * (self.radius / norm)

    def contains(self, x: Point, tol: float = MEMBERSHIP_TOL) -> bool:
        x = as_point(x, n=self.n)
        return float(np.linalg.norm(x - self.center)) <= self.radius + tol

    def sample(self, rng: np.random.Generator, scale: float = 1.0) -> Point:
        d = rng.standard_normal(self.n)
        d /= max(np.linalg.norm(d), 1e-300)
        # radius^n-weighted radial draw gives a uniform sample in the ball
        rad = self.radius * rng.uniform() ** (1.0 / self.n)
        return self.center + rad * d


@dataclass(frozen=True, eq=False)
class Simplex(FeasibleSet):
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise InvalidSetError("dimension must be >= 1")

    def project(self, z: Point) -> Point:
        return project_simplex(as_point(z, n=self.n))

    def contains(self, x: Point, tol: float = MEMBERSHIP_TOL) -> bool:
        x = as_point(x, n=self.n)
        return bool(np.all(x >= -tol) and abs(float(np.sum(x)) - 1.0) <= tol)

    def sample(self, rng: np.random.Generator, scale: float = 1.0) -> Point:
        return rng.dirichlet(np.ones(self.n))


def project_simplex(z: Point) -> Point:
    """Exact projection onto the standard simplex, sort-based O(n log n)."""
    u = np.sort(z)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, z.size + 1)
    cond = u - (css - 1.0) / idx > 0
    rho = int(np.nonzero(cond)[0][-1])
    theta = (css[rho] - 1.0) / (rho + 1)
    return np.maximum(z - theta, 0.0)


def project(Q: FeasibleSet, z) -> Point:
    """Euclidean projection of ``z`` onto ``Q``; idempotent."""
    return Q.project(as_point(z, n=Q.n))


@dataclass(frozen=True, eq=False)
class Problem:
    """An objective with declared smoothness/convexity constants on a set Q.

    ``f`` is the full objective the run reports on. ``grad_exact``, when
    present, is the exact gradient of the smooth part (equal to the gradient
    of ``f`` for smooth problems). ``R`` is a caller-declared bound on the
    start-to-optimum distance; it is never estimated silently.
    """

    n: int
    f: Callable[[Point], float]
    L: float
    Q: FeasibleSet
    R: float
    grad_exact: Optional[Callable[[Point], Point]] = None
    mu: float = 0.0
    x_star: Optional[Point] = None
    f_star: Optional[float] = None
    x0: Optional[Point] = None

    def __post_init__(self):
        if self.n < 1:
            raise ContractError("dimension must be >= 1")
        if not self.L > 0:
            raise ContractError("L must be positive")
        if self.mu < 0 or self.mu > self.L + 1e-12:
            raise ContractError("need 0 <= mu <= L")
        if not self.R > 0:
            raise ContractError("R must be positive")
        if self.Q.n != self.n:
            raise ContractError("feasible set dimension does not match problem")
        if self.x_star is not None:
            xs = as_point(self.x_star, n=self.n)
            object.__setattr__(self, "x_star", xs)
            if not self.Q.contains(xs):
                raise ContractError("declared x_star is not feasible")
            if self.f_star is not None and abs(float(self.f(xs)) - self.f_star) > 1e-9:
                raise ContractError("f(x_star) does not match declared f_star")
        if self.x0 is not None:
            x0 = as_point(self.x0, n=self.n)
            object.__setattr__(self, "x0", x0)
            if self.x_star is not None:
                if np.linalg.norm(x0 - self.x_star) > self.R + 1e-9:
                    raise ContractError("R is smaller than ||x0 - x_star||")

    def value(self, x: Point) -> float:
        return float(self.f(x))

    def start_radius(self, x0: Point) -> float:
        """Exact ||x0 - x_star|| when the minimizer is known, else declared R."""
        if self.x_star is not None:
            return float(np.linalg.norm(x0 - self.x_star))
        return self.R


@dataclass
class TraceRecord:
    k: int
    f_value: float
    oracle_calls: int
    x: Optional[Point] = None
    y: Optional[Point] = None
    u: Optional[Point] = None
    f_avg_value: Optional[float] = None
    A: Optional[float] = None
    alpha: Optional[float] = None
    realized_delta2: Optional[float] = None


@dataclass
class Trace:
    """Per-iteration record of one solver run."""

    method: str
    records: list[TraceRecord] = field(default_factory=list)
    output_point: Optional[Point] = None
    output_gap: Optional[float] = None
    truncated: bool = False

    def append(self, rec: TraceRecord) -> None:
        if self.records and rec.k != self.records[-1].k + 1:
            raise ContractError("trace records must be consecutive in k")
        if self.records and rec.oracle_calls < self.records[-1].oracle_calls:
            raise ContractError("oracle call count must be nondecreasing")
        self.records.append(rec)

    def gaps(self, f_star: float, averaged: bool = False) -> NDArray[np.float64]:
        """Gap series for k >= 1. ``averaged`` selects the averaged-point value."""
        vals = []
        for rec in self.records[1:]:
            v = rec.f_avg_value if averaged else rec.f_value
            if v is None:
                raise ContractError("requested value series not recorded")
            vals.append(v - f_star)
        return np.asarray(vals, dtype=np.float64)

    @property
    def final_calls(self) -> int:
        return self.records[-1].oracle_calls if self.records else 0
