"""Composite-quadratic prox subproblems and their exact or certified solvers.

Every step of the gradient and fast gradient loops minimizes
``model part + sum_j (w_j/2) ||x - c_j||^2`` over the feasible set. Multiple
quadratic terms are first aggregated into one (weight W = sum w_j, center
c_bar = weighted mean), after which three dispatch routes cover the model
families:

  (a) single linear term: closed form, project(c_bar - g / W);
  (b) linear + weighted L1 on a full space or box: coordinatewise
      soft-thresholding, clipped to the box;
  (c) max-of-linear bundle: projected gradient ascent on the concave dual
      over the m-simplex, with a certified primal-dual gap.

All functions are pure; tasks can be solved concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    ContractError,
    FeasibleSet,
    FullSpace,
    Box,
    Point,
    ToleranceNotReachedError,
    UnsupportedCapabilityError,
    as_point,
    project_simplex,
)

DEFAULT_TOL = 1e-10
DUAL_ITER_CAP = 100_000


class CompositeTerm:
    """Simple convex term h added to the smooth model."""

    def value(self, y: Point) -> float:
        raise NotImplementedError

    @property
    def is_trivial(self) -> bool:
        """True when h contributes nothing to the argmin beyond the Q constraint."""
        return True


class Zero(CompositeTerm):
    def value(self, y: Point) -> float:
        return 0.0

    def __repr__(self):
        return "Zero()"


class IndicatorOfQ(CompositeTerm):
    """Indicator of the feasible set; realized by the Q constraint, never +inf."""

    def value(self, y: Point) -> float:
        return 0.0

    def __repr__(self):
        return "IndicatorOfQ()"


@dataclass(frozen=True)
class L1(CompositeTerm):
    lam: float

    def __post_init__(self):
        if self.lam < 0:
            raise ContractError("L1 weight must be >= 0")

    def value(self, y: Point) -> float:
        return self.lam * float(np.abs(y).sum())

    @property
    def is_trivial(self) -> bool:
        return self.lam == 0.0


@dataclass
class ProxTask:
    """One composite-quadratic argmin instance.

    Exactly one of ``linear`` (single gradient vector) or ``bundle``
    (list of (intercept, slope-vector) affine pieces, combined by max)
    must be given. ``h_scale`` multiplies the composite term, matching the
    alpha-scaled model of the accelerated step.
    """

    Q: FeasibleSet
    quad_terms: list[tuple[float, Point]]
    linear: Optional[Point] = None
    bundle: Optional[list[tuple[float, Point]]] = None
    h: CompositeTerm = field(default_factory=Zero)
    h_scale: float = 1.0

    def __post_init__(self):
        if (self.linear is None) == (self.bundle is None):
            raise ContractError("exactly one of linear/bundle must be set")
        if not self.quad_terms:
            raise ContractError("at least one quadratic term is required")
        total = 0.0
        for w, c in self.quad_terms:
            if w < 0:
                raise ContractError("quadratic weights must be >= 0")
            as_point(c, n=self.Q.n)
            total += w
        if not total > 0:
            raise ContractError("total quadratic weight must be positive")
        if self.bundle is not None and len(self.bundle) == 0:
            raise ContractError("bundle must be nonempty")

    @property
    def total_weight(self) -> float:
        return float(sum(w for w, _ in self.quad_terms))

    def agg_center(self) -> Point:
        W = self.total_weight
        c = np.zeros(self.Q.n)
        for w, ci in self.quad_terms:
            c += (w / W) * np.asarray(ci, dtype=np.float64)
        return c

    def model_part(self, y: Point) -> float:
        if self.linear is not None:
            v = float(self.linear @ y)
        else:
            v = max(float(b + g @ y) for b, g in self.bundle)
        return v + self.h_scale * self.h.value(y)

    def value(self, y: Point) -> float:
        """phi(y) up to an additive constant shared by all evaluations."""
        y = as_point(y, n=self.Q.n)
        quad = 0.0
        for w, c in self.quad_terms:
            d = y - c
            quad += 0.5 * w * float(d @ d)
        return self.model_part(y) + quad


def _pick_h(task: ProxTask) -> Optional[L1]:
    """Return the effective L1 term, or None when h is prox-transparent."""
    if isinstance(task.h, L1) and not task.h.is_trivial and task.h_scale > 0:
        return task.h
    if task.h.is_trivial:
        return None
    raise UnsupportedCapabilityError(f"unsupported composite term {task.h!r}")


def _soft_threshold(v: Point, t: float) -> Point:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def solve_prox(task: ProxTask, tol: float = DEFAULT_TOL,
               max_iter: int = DUAL_ITER_CAP) -> Point:
    """Minimize the task objective over Q to within ``tol`` in value.

    Routes (a) and (b) are exact closed forms; route (c) certifies a
    primal-dual gap <= tol and raises ToleranceNotReachedError (carrying the
    achieved gap) if the iteration cap is hit first.
    """
    if not tol > 0:
        raise ContractError("tol must be positive")
    W = task.total_weight
    cbar = task.agg_center()
    h = _pick_h(task)

    if task.linear is not None:
        g = as_point(task.linear, n=task.Q.n)
        if h is None:
            return task.Q.project(cbar - g / W)
        lam_eff = task.h_scale * h.lam
        x = _soft_threshold(cbar - g / W, lam_eff / W)
        if isinstance(task.Q, FullSpace):
            return x
        if isinstance(task.Q, Box):
            # 1-D convex pieces: clipping the unconstrained minimizer is exact
            return np.clip(x, task.Q.lower, task.Q.upper)
        raise UnsupportedCapabilityError(
            "L1 composite prox supports FullSpace and Box only; "
            "supported routes: linear+any set, linear+L1+{FullSpace,Box}, "
            "bundle+any set")

    if h is not None:
        raise UnsupportedCapabilityError(
            "max-linear bundle with an L1 term is not supported; "
            "supported routes: linear+any set, linear+L1+{FullSpace,Box}, "
            "bundle+any set")

    if len(task.bundle) == 1:
        b0, g0 = task.bundle[0]
        return task.Q.project(cbar - as_point(g0, n=task.Q.n) / W)

    lam, gap = dual_simplex_ascent(task, tol, max_iter=max_iter)
    if gap > tol:
        raise ToleranceNotReachedError(
            f"dual ascent stopped at gap {gap:.3e} > tol {tol:.3e}", gap)
    return _primal_from_dual(task, lam)


def _primal_from_dual(task: ProxTask, lam: Point) -> Point:
    W = task.total_weight
    cbar = task.agg_center()
    g_mix = np.zeros(task.Q.n)
    for li, (_, gi) in zip(lam, task.bundle):
        g_mix += li * np.asarray(gi, dtype=np.float64)
    return task.Q.project(cbar - g_mix / W)


def _dual_parts(task: ProxTask):
    W = task.total_weight
    cbar = task.agg_center()
    B = np.asarray([b for b, _ in task.bundle], dtype=np.float64)
    G = np.stack([as_point(g, n=task.Q.n) for _, g in task.bundle])  # (m, n)
    return W, cbar, B, G


def _dual_value_grad(task: ProxTask, lam: Point, W, cbar, B, G):
    """D(lam) = min_y sum_i lam_i (b_i + <g_i, y>) + W/2 ||y - c_bar||^2 and its gradient."""
    y = task.Q.project(cbar - (G.T @ lam) / W)
    slopes = B + G @ y
    d = y - cbar
    return float(lam @ slopes) + 0.5 * W * float(d @ d), slopes, y


def _primal_value(task: ProxTask, y: Point, W, cbar, B, G) -> float:
    d = y - cbar
    return float(np.max(B + G @ y)) + 0.5 * W * float(d @ d)


def _polish_fullspace(task: ProxTask, lam: Point, W, B, Gram, beta) -> Optional[Point]:
    """Solve the dual KKT system on the current support; None if infeasible."""
    support = np.nonzero(lam > 1e-12)[0]
    if support.size == 0:
        return None
    m_s = support.size
    sys = np.zeros((m_s + 1, m_s + 1))
    sys[:m_s, :m_s] = Gram[np.ix_(support, support)] / W
    sys[:m_s, m_s] = 1.0
    sys[m_s, :m_s] = 1.0
    rhs = np.concatenate([beta[support], [1.0]])
    sol, *_ = np.linalg.lstsq(sys, rhs, rcond=None)
    lam_s = sol[:m_s]
    if np.any(lam_s < -1e-10):
        return None
    out = np.zeros_like(lam)
    out[support] = np.maximum(lam_s, 0.0)
    s = out.sum()
    if s <= 0:
        return None
    return out / s


def dual_simplex_ascent(task: ProxTask, tol: float = DEFAULT_TOL,
                        max_iter: int = DUAL_ITER_CAP) -> tuple[Point, float]:
    """Maximize the concave dual of a bundle task over the m-simplex.

    Fixed step 1/L_dual with L_dual the largest eigenvalue of the Gram matrix
    of the bundle slopes divided by the total quadratic weight. On a full
    space the dual is an explicit quadratic, so the active-set KKT system is
    solved periodically to finish off the last digits; the returned gap is a
    certified primal-dual gap either way. Hitting the cap returns the best
    iterate with its gap; the caller decides.
    """
    if task.bundle is None:
        raise ContractError("dual ascent applies to bundle tasks")
    m = len(task.bundle)
    W, cbar, B, G = _dual_parts(task)
    if m == 1:
        return np.array([1.0]), 0.0

    Gram = G @ G.T
    beta = B + G @ cbar
    L_dual = float(np.max(np.linalg.eigvalsh(Gram))) / W
    step = 1.0 / L_dual if L_dual > 0 else 1.0
    unconstrained = isinstance(task.Q, FullSpace)

    lam = np.full(m, 1.0 / m)
    best_lam, best_gap = lam, np.inf
    for it in range(max_iter):
        dval, slopes, y = _dual_value_grad(task, lam, W, cbar, B, G)
        gap = _primal_value(task, y, W, cbar, B, G) - dval
        if gap < best_gap:
            best_lam, best_gap = lam, gap
        if best_gap <= tol:
            return best_lam, max(best_gap, 0.0)
        if unconstrained and it % 10 == 9:
            polished = _polish_fullspace(task, lam, W, B, Gram, beta)
            if polished is not None:
                dval_p, _, y_p = _dual_value_grad(task, polished, W, cbar, B, G)
                gap_p = _primal_value(task, y_p, W, cbar, B, G) - dval_p
                if gap_p < best_gap:
                    best_lam, best_gap = polished, gap_p
                    lam = polished
                if best_gap <= tol:
                    return best_lam, max(best_gap, 0.0)
        lam = project_simplex(lam + step * slopes)
    return best_lam, best_gap
