"""Gradient and fast gradient methods in model generality, plus small-step SGD.

Both methods advance by solving one composite-quadratic prox subproblem per
iteration, with the model refreshed exactly once per iteration at the prox
center (the current iterate for the plain method, the extrapolated point for
the accelerated one). Runs are strictly sequential; run independent
(seed, config) pairs on separate workers with their own model instances.

On deterministic runs with a known optimal value, the theoretical guarantee
is checked after every iteration and a violation raises
GuaranteeViolationError; this is a correctness tripwire, not a stopping rule.
"""

from __future__ import annotations

import numpy as np

from .core import (
    ContractError,
    GuaranteeViolationError,
    Point,
    Problem,
    Trace,
    TraceRecord,
    as_point,
)
from .model import Model
from .oracle import GradOracle
from .subproblem import solve_prox

BOUND_SLACK = 1e-9
A_OVERFLOW_GUARD = 1e300


class SolverStepError(RuntimeError):
    """Subproblem failure inside a solver loop, tagged with the iteration."""

    def __init__(self, iteration: int, message: str):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


def alpha_next(A_k: float, mu: float, L: float) -> tuple[float, float]:
    """Largest root of L a^2 = (A_k + a)(1 + A_k mu) and the advanced A.

    Solves L a^2 - (1 + A_k mu) a - A_k (1 + A_k mu) = 0 with the plus-branch
    quadratic formula, which is cancellation-free here because both terms of
    the numerator are nonnegative. The defining identity is re-checked to
    1e-9 relative.
    """
    if not L > 0:
        raise ContractError("L must be positive")
    if A_k < 0 or mu < 0:
        raise ContractError("need A_k >= 0 and mu >= 0")
    t = 1.0 + A_k * mu
    # factored form keeps intermediates finite while A_k is representable
    alpha = t * (1.0 + np.sqrt(1.0 + 4.0 * L * A_k / t)) / (2.0 * L)
    A_next = A_k + alpha
    # identity A_next * t = L alpha^2 checked in ratio form (overflow-safe)
    resid = (A_next / alpha) * (t / alpha) - L
    if abs(resid) > 1e-9 * L:
        raise GuaranteeViolationError("alpha recurrence identity broke")
    return alpha, A_next


def a_sequence(L: float, mu: float, N: int, dtype=np.float64):
    """The (alpha_k, A_k) sequences for k = 1..N, in a chosen float width.

    ``dtype=numpy.longdouble`` keeps strongly convex sequences representable
    far beyond float64 range (A_N grows geometrically in that regime).
    """
    one = dtype(1.0)
    Ld = dtype(L)
    mud = dtype(mu)
    A = dtype(0.0)
    alphas = np.zeros(N, dtype=dtype)
    As = np.zeros(N, dtype=dtype)
    for k in range(N):
        t = one + A * mud
        alpha = t * (one + np.sqrt(one + dtype(4.0) * Ld * A / t)) / (dtype(2.0) * Ld)
        A = A + alpha
        resid = (A / alpha) * (t / alpha) - Ld
        if abs(resid) > 1e-9 * Ld:
            raise GuaranteeViolationError(f"alpha identity broke at step {k + 1}")
        alphas[k] = alpha
        As[k] = A
    return alphas, As


def _start(problem: Problem, x0, N: int) -> Point:
    if N < 1:
        raise ContractError("N must be >= 1")
    x0 = as_point(x0, n=problem.n)
    if not problem.Q.contains(x0, tol=1e-8):
        raise ContractError("x0 is not feasible")
    return x0


def _deterministic_check(model: Model, problem: Problem) -> bool:
    return (not model.is_stochastic) and problem.f_star is not None


def run_gm(problem: Problem, model: Model, x0, N: int, tol: float = 1e-10,
           store_points: bool = True, check_bounds: bool = True) -> Trace:
    """Plain gradient method driven by a model surrogate.

    Each step minimizes psi(., x_k) + (L/2)||. - x_k||^2 over Q. The reported
    output is the geometrically weighted average of x_1..x_N with ratio
    q = 1 - mu/L (the plain average when mu = 0); the last iterate is also
    recorded since the two differ in stochastic runs.
    """
    x = _start(problem, x0, N)
    L, mu = model.L_model, model.mu_model
    q = 1.0 - mu / L
    R0 = problem.start_radius(x)
    check = check_bounds and _deterministic_check(model, problem)

    trace = Trace(method="gm")
    trace.append(TraceRecord(k=0, f_value=problem.value(x), oracle_calls=model.oracle_calls,
                             x=x.copy() if store_points else None))
    wsum = np.zeros(problem.n)
    wtot = 0.0
    y_avg = x
    for k in range(N):
        model.refresh(x)
        # posed normalized by L: same argmin, tolerance relative to scale
        task = model.make_prox_task(1.0 / L, [(1.0, x)], problem.Q)
        try:
            x = solve_prox(task, tol)
        except Exception as exc:
            raise SolverStepError(k, str(exc)) from exc
        wsum = q * wsum + x
        wtot = q * wtot + 1.0
        y_avg = wsum / wtot
        f_avg = problem.value(y_avg)
        trace.append(TraceRecord(
            k=k + 1, f_value=problem.value(x), oracle_calls=model.oracle_calls,
            x=x.copy() if store_points else None,
            y=y_avg.copy() if store_points else None,
            f_avg_value=f_avg, realized_delta2=model.realized_delta2()))
        if check:
            bound = 0.5 * L * R0 * R0 * min(1.0 / (k + 1), q ** (k + 1))
            if f_avg - problem.f_star > bound + BOUND_SLACK:
                raise GuaranteeViolationError(
                    f"gm bound failed at k={k + 1}: gap {f_avg - problem.f_star:.3e} "
                    f"> {bound:.3e}")
    trace.output_point = y_avg
    if problem.f_star is not None:
        trace.output_gap = problem.value(y_avg) - problem.f_star
    return trace


def run_fgm(problem: Problem, model: Model, x0, N: int, tol: float = 1e-10,
            store_points: bool = True, check_bounds: bool = True) -> Trace:
    """Fast gradient method driven by a model surrogate.

    State (x_k, u_k, A_k): alpha from the largest-root recurrence, the
    extrapolated point y_{k+1} = (alpha u_k + A_k x_k)/A_{k+1}, one prox step
    on alpha * psi(., y_{k+1}) + (1 + A_k mu)/2 ||. - u_k||^2
    + alpha mu / 2 ||. - y_{k+1}||^2, then the convex recombination for
    x_{k+1}. Output is the last iterate. Strongly convex A_k growth is
    geometric; the run truncates with a notice if A_k would overflow.
    """
    x = _start(problem, x0, N)
    L, mu = model.L_model, model.mu_model
    R0 = problem.start_radius(x)
    check = check_bounds and _deterministic_check(model, problem)

    u = x.copy()
    A = 0.0
    trace = Trace(method="fgm")
    trace.append(TraceRecord(k=0, f_value=problem.value(x), oracle_calls=model.oracle_calls,
                             x=x.copy() if store_points else None,
                             u=u.copy() if store_points else None, A=0.0, alpha=0.0))
    for k in range(N):
        if A > A_OVERFLOW_GUARD:
            trace.truncated = True
            break
        alpha, A_next = alpha_next(A, mu, L)
        y = (alpha * u + A * x) / A_next
        model.refresh(y)
        # posed normalized by the total quadratic weight 1 + A_next mu:
        # same argmin, data stays bounded and the tolerance is scale-relative
        W = 1.0 + A_next * mu
        quads = [((1.0 + A * mu) / W, u)]
        if mu > 0:
            quads.append((alpha * mu / W, y))
        task = model.make_prox_task(alpha / W, quads, problem.Q)
        try:
            u = solve_prox(task, tol)
        except Exception as exc:
            raise SolverStepError(k, str(exc)) from exc
        x = (alpha * u + A * x) / A_next
        A = A_next
        f_x = problem.value(x)
        trace.append(TraceRecord(
            k=k + 1, f_value=f_x, oracle_calls=model.oracle_calls,
            x=x.copy() if store_points else None,
            y=y.copy() if store_points else None,
            u=u.copy() if store_points else None,
            A=A, alpha=alpha, realized_delta2=model.realized_delta2()))
        if check:
            bound = R0 * R0 / (2.0 * A)
            if f_x - problem.f_star > bound + BOUND_SLACK:
                raise GuaranteeViolationError(
                    f"fgm bound failed at k={k + 1}: gap {f_x - problem.f_star:.3e} "
                    f"> {bound:.3e}")
    trace.output_point = x
    if problem.f_star is not None:
        trace.output_gap = problem.value(x) - problem.f_star
    return trace


def run_sgd_small_step(problem: Problem, oracle: GradOracle, h: float, x0, N: int,
                       store_points: bool = True) -> Trace:
    """Projected SGD with a fixed step h <= 1/L; outputs the plain average.

    The step choice h = R / (sigma sqrt(N)) balances the two error terms of
    the averaged-iterate guarantee, giving an O(sigma R / sqrt(N)) gap.
    """
    x = _start(problem, x0, N)
    if not 0 < h <= 1.0 / problem.L + 1e-12:
        raise ContractError("need 0 < h <= 1/L")
    trace = Trace(method="sgd")
    trace.append(TraceRecord(k=0, f_value=problem.value(x), oracle_calls=oracle.call_counter,
                             x=x.copy() if store_points else None))
    xsum = np.zeros(problem.n)
    avg = x
    for k in range(N):
        g = oracle.sample_grad(x)
        x = problem.Q.project(x - h * g)
        xsum += x
        avg = xsum / (k + 1)
        trace.append(TraceRecord(
            k=k + 1, f_value=problem.value(x), oracle_calls=oracle.call_counter,
            x=x.copy() if store_points else None,
            y=avg.copy() if store_points else None,
            f_avg_value=problem.value(avg)))
    trace.output_point = avg
    if problem.f_star is not None:
        trace.output_gap = problem.value(avg) - problem.f_star
    return trace
