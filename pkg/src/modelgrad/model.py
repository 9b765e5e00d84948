"""Inexact model surrogates of the objective and their empirical verification.

A model evaluates psi(y, x), a convex-in-y surrogate with psi(x, x) = 0 that
sandwiches the objective between a mu-strongly-convex lower estimate and an
L-smooth upper estimate, up to per-iteration errors. Three families:

  * linear: psi(y, x) = <g(x), y - x> with g a (batched) stochastic gradient;
  * composite: the linear surrogate plus h(y) - h(x) for a simple convex h;
  * max-linear: the max of per-component stochastic linearizations,
    for objectives of the form max_i f_i(x).

When the gradient is stochastic the smoothness constant is doubled so the
upper estimate absorbs the noise cross-term (Young's inequality); a
constructor flag disables the doubling for ablation runs.

A model instance caches one stochastic linearization per refresh and is
single-owner; build one model per concurrent worker.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ContractError, FeasibleSet, Point, Problem, as_point
from .oracle import GradOracle
from .subproblem import CompositeTerm, ProxTask


@dataclass(frozen=True)
class CompositeSpec:
    """Smooth stochastic part plus a simple convex term h."""

    smooth_oracle: GradOracle
    h: CompositeTerm


@dataclass(frozen=True)
class MaxSmoothSpec:
    """Components f_i of a max-of-smooth objective, one oracle per component.

    Component oracles must carry independent noise streams (use
    ``GradOracle.clone``); each f_i must have an L-Lipschitz gradient with
    constant at most ``L_shared``. When every component is mu-strongly
    convex the max inherits the same lower curvature, so ``mu`` may be
    declared and the solvers will exploit it.
    """

    oracles: list[GradOracle]
    L_shared: float
    mu: float = 0.0

    def __post_init__(self):
        if len(self.oracles) < 1:
            raise ContractError("need at least one component")
        if not self.L_shared > 0:
            raise ContractError("L_shared must be positive")
        if self.mu < 0 or self.mu > self.L_shared:
            raise ContractError("need 0 <= mu <= L_shared")


class Model:
    """Base class; subclasses fill in refresh, psi, and prox-task assembly."""

    L_model: float
    mu_model: float
    step_family: str
    is_stochastic: bool

    def __init__(self):
        self._center: Optional[Point] = None

    def refresh(self, x: Point) -> None:
        """Redraw the stochastic linearization data at center ``x``."""
        raise NotImplementedError

    def _ensure_center(self, x: Point) -> None:
        if self._center is None or not np.array_equal(x, self._center):
            self.refresh(x)

    def psi(self, y: Point, x: Point) -> float:
        raise NotImplementedError

    def make_prox_task(self, scale: float, quad_terms: list[tuple[float, Point]],
                       Q: FeasibleSet) -> ProxTask:
        """Express scale * psi(., center) + quadratics as a ProxTask."""
        raise NotImplementedError

    @property
    def oracle_calls(self) -> int:
        raise NotImplementedError

    def realized_delta2(self) -> Optional[float]:
        """Upper-model error of the cached draw, when exact gradients allow it."""
        return None


class LinearModel(Model):
    """psi(y, x) = <g(x), y - x> with g one batched stochastic gradient."""

    step_family = "linear"

    def __init__(self, oracle: GradOracle, double_l: bool = True,
                 track_delta2: bool = False):
        super().__init__()
        self.oracle = oracle
        self.is_stochastic = not oracle.noise.is_none
        factor = 2.0 if (self.is_stochastic and double_l) else 1.0
        self.L_model = factor * oracle.problem.L
        self.mu_model = oracle.problem.mu
        self.track_delta2 = track_delta2
        self._g: Optional[Point] = None

    def refresh(self, x: Point) -> None:
        x = as_point(x, n=self.oracle.problem.n)
        self._g = self.oracle.batch_grad(x)
        self._center = x.copy()

    @property
    def cached_grad(self) -> Point:
        if self._g is None:
            raise ContractError("model not refreshed yet")
        return self._g

    def psi(self, y: Point, x: Point) -> float:
        self._ensure_center(x)
        return float(self._g @ (y - x))

    def make_prox_task(self, scale, quad_terms, Q) -> ProxTask:
        return ProxTask(Q=Q, quad_terms=quad_terms, linear=scale * self._g)

    @property
    def oracle_calls(self) -> int:
        return self.oracle.call_counter

    def realized_delta2(self) -> Optional[float]:
        if not (self.track_delta2 and self.oracle.problem.grad_exact is not None):
            return None
        eta = self._g - self.oracle.grad(self._center)
        return float(eta @ eta) / (2.0 * self.oracle.problem.L)


class CompositeModel(LinearModel):
    """Linear surrogate of the smooth part plus exact h(y) - h(x)."""

    step_family = "composite"

    def __init__(self, spec: CompositeSpec, double_l: bool = True,
                 track_delta2: bool = False):
        super().__init__(spec.smooth_oracle, double_l=double_l, track_delta2=track_delta2)
        self.h = spec.h

    def psi(self, y: Point, x: Point) -> float:
        self._ensure_center(x)
        return float(self._g @ (y - x)) + self.h.value(y) - self.h.value(x)

    def make_prox_task(self, scale, quad_terms, Q) -> ProxTask:
        return ProxTask(Q=Q, quad_terms=quad_terms, linear=scale * self._g,
                        h=self.h, h_scale=scale)


class MaxSmoothModel(Model):
    """psi(y, x) = max_i {f_i(x) + <g_i(x), y - x>} - max_i f_i(x).

    The smoothness constant is 2 * L_shared by default: the doubled constant
    absorbs the per-component noise cross-terms, and it remains a valid upper
    estimate for exact gradients.
    """

    step_family = "max_linear"

    def __init__(self, spec: MaxSmoothSpec, double_l: bool = True,
                 track_delta2: bool = False):
        super().__init__()
        self.spec = spec
        self.is_stochastic = any(not o.noise.is_none for o in spec.oracles)
        self.L_model = (2.0 if double_l else 1.0) * spec.L_shared
        self.mu_model = spec.mu
        self.track_delta2 = track_delta2
        self._f_vals: Optional[np.ndarray] = None
        self._g: Optional[np.ndarray] = None  # (m, n)

    def refresh(self, x: Point) -> None:
        x = as_point(x, n=self.spec.oracles[0].problem.n)
        self._f_vals = np.asarray([o.problem.value(x) for o in self.spec.oracles])
        self._g = np.stack([o.batch_grad(x) for o in self.spec.oracles])
        self._center = x.copy()

    @property
    def cached_bundle(self) -> tuple[np.ndarray, np.ndarray]:
        if self._g is None:
            raise ContractError("model not refreshed yet")
        return self._f_vals, self._g

    def psi(self, y: Point, x: Point) -> float:
        self._ensure_center(x)
        vals = self._f_vals + self._g @ (y - x)
        return float(np.max(vals) - np.max(self._f_vals))

    def make_prox_task(self, scale, quad_terms, Q) -> ProxTask:
        # absolute affine form: b_i + <g_i, y> with b_i = f_i(c) - <g_i, c>
        bundle = [(scale * (float(fi) - float(gi @ self._center)), scale * gi)
                  for fi, gi in zip(self._f_vals, self._g)]
        return ProxTask(Q=Q, quad_terms=quad_terms, bundle=bundle)

    @property
    def oracle_calls(self) -> int:
        return sum(o.call_counter for o in self.spec.oracles)

    def realized_delta2(self) -> Optional[float]:
        if not self.track_delta2:
            return None
        if any(o.problem.grad_exact is None for o in self.spec.oracles):
            return None
        worst = 0.0
        for o, gi in zip(self.spec.oracles, self._g):
            eta = gi - o.grad(self._center)
            worst = max(worst, float(eta @ eta))
        return worst / (2.0 * self.spec.L_shared)


def linear_model(oracle: GradOracle, double_l: bool = True,
                 track_delta2: bool = False) -> LinearModel:
    return LinearModel(oracle, double_l=double_l, track_delta2=track_delta2)


def composite_model(spec: CompositeSpec, double_l: bool = True,
                    track_delta2: bool = False) -> CompositeModel:
    return CompositeModel(spec, double_l=double_l, track_delta2=track_delta2)


def max_smooth_model(spec: MaxSmoothSpec, double_l: bool = True,
                     track_delta2: bool = False) -> MaxSmoothModel:
    return MaxSmoothModel(spec, double_l=double_l, track_delta2=track_delta2)


@dataclass
class SandwichReport:
    """Residuals of the two-sided model inequality over a batch of pairs."""

    delta1: np.ndarray
    delta2: np.ndarray

    @property
    def delta1_max(self) -> float:
        return float(np.max(self.delta1))

    @property
    def delta2_max(self) -> float:
        return float(np.max(self.delta2))

    @property
    def delta1_mean(self) -> float:
        return float(np.mean(self.delta1))

    @property
    def delta2_mean(self) -> float:
        return float(np.mean(self.delta2))


def verify_model_sandwich(model: Model, problem: Problem,
                          pairs: list[tuple[Point, Point]]) -> SandwichReport:
    """Measure realized lower/upper model errors on (y, x) pairs.

    For each pair the model is refreshed at x, then

      delta1 = [f(x) + psi(y,x) + mu/2 ||y-x||^2 - f(y)]_+   (lower residual)
      delta2 = [f(y) - f(x) - psi(y,x) - L/2 ||y-x||^2]_+    (upper residual)

    with the model's own constants. Exact models give zeros to roundoff.
    """
    d1, d2 = [], []
    for y, x in pairs:
        y = as_point(y, n=problem.n)
        x = as_point(x, n=problem.n)
        model.refresh(x)
        p = model.psi(y, x)
        fy, fx = problem.value(y), problem.value(x)
        dsq = float((y - x) @ (y - x))
        d1.append(max(0.0, fx + p + 0.5 * model.mu_model * dsq - fy))
        d2.append(max(0.0, fy - fx - p - 0.5 * model.L_model * dsq))
    return SandwichReport(np.asarray(d1), np.asarray(d2))
