import math

import numpy as np
import pytest

from modelgrad import (
    Ball,
    ContractError,
    CompositeSpec,
    FullSpace,
    GradOracle,
    GuaranteeViolationError,
    L1,
    NoiseSpec,
    Problem,
    Simplex,
    SolverStepError,
    a_sequence,
    alpha_next,
    composite_model,
    linear_model,
    make_quadratic,
    run_fgm,
    run_gm,
    run_sgd_small_step,
)

RNG = np.random.default_rng(2718)


def quad_problem(n=2, diag=None, x0=None, Q=None, mu=0.0):
    d = np.ones(n) if diag is None else np.asarray(diag, dtype=float)
    Q = Q or FullSpace(n)
    x0 = np.ones(n) if x0 is None else np.asarray(x0, dtype=float)
    return Problem(
        n=n,
        f=lambda x: 0.5 * float(x @ (d * x)),
        grad_exact=lambda x: d * x,
        L=float(d.max()),
        mu=mu,
        Q=Q,
        x_star=Q.project(np.zeros(n)),
        f_star=0.5 * float(Q.project(np.zeros(n)) @ (d * Q.project(np.zeros(n)))),
        R=float(np.linalg.norm(x0 - Q.project(np.zeros(n)))) + 1e-12,
        x0=x0,
    )


def test_alpha_next_hand_values():
    a1, A1 = alpha_next(0.0, 0.0, 1.0)
    assert a1 == 1.0 and A1 == 1.0
    a2, A2 = alpha_next(1.0, 0.0, 1.0)
    assert abs(a2 - (1 + math.sqrt(5)) / 2) <= 1e-15
    assert abs(A2 - (3 + math.sqrt(5)) / 2) <= 1e-15
    a2s, A2s = alpha_next(1.0, 1.0, 1.0)
    assert abs(a2s - (1 + math.sqrt(3))) <= 1e-15
    assert abs(A2s - (2 + math.sqrt(3))) <= 1e-15
    with pytest.raises(ContractError):
        alpha_next(0.0, 0.0, 0.0)


def test_a_sequence_identity_and_growth_bounds():
    for L in (1.0, 10.0, 100.0):
        for ratio in (0.0, 0.01, 0.1):
            alphas, As = a_sequence(L, ratio * L, 500, dtype=np.longdouble)
            Ns = np.arange(1, 501, dtype=np.float64)
            # 1/A_N <= 4L/N^2
            assert np.all(1.0 / As.astype(np.float64)[: 500] <= 4 * L / Ns**2 + 1e-12)
            if ratio > 0:
                lhs = -np.log(As[:500].astype(np.float64))
                rhs = np.log(2 * L) - (Ns - 1) / 2 * math.sqrt(ratio)
                assert np.all(lhs <= rhs + 1e-12)


def test_gm_one_exact_step_reaches_minimizer():
    prob = quad_problem(2, x0=[5.0, 0.0])
    model = linear_model(GradOracle(prob))
    tr = run_gm(prob, model, prob.x0, 1)
    assert np.allclose(tr.records[-1].x, [0.0, 0.0], atol=1e-15)
    assert tr.output_gap <= 1e-15


def test_gm_plain_average_when_mu_zero():
    prob = quad_problem(4, diag=[0.2, 0.5, 0.8, 1.0], x0=RNG.normal(size=4))
    model = linear_model(GradOracle(prob))
    tr = run_gm(prob, model, prob.x0, 30)
    xs = np.stack([rec.x for rec in tr.records[1:]])
    assert np.allclose(tr.output_point, xs.mean(axis=0), atol=1e-12)


def test_gm_weighted_average_matches_direct_formula():
    prob = quad_problem(3, diag=[0.3, 0.6, 1.0], x0=[1.0, -1.0, 0.5], mu=0.3)
    model = linear_model(GradOracle(prob))
    tr = run_gm(prob, model, prob.x0, 25)
    q = 1.0 - model.mu_model / model.L_model
    xs = [rec.x for rec in tr.records[1:]]
    N = len(xs)
    weights = np.array([q ** (N - i) for i in range(1, N + 1)])
    direct = sum(w * x for w, x in zip(weights, xs)) / weights.sum()
    assert np.allclose(tr.output_point, direct, atol=1e-12)


def test_gm_diagonal_contraction_and_bound():
    prob = quad_problem(2, diag=[1.0, 10.0], x0=[1.0, 1.0])
    model = linear_model(GradOracle(prob))
    tr = run_gm(prob, model, prob.x0, 100)
    # slow coordinate contracts by (1 - 1/10) per step
    assert abs(tr.records[-1].x[0] - 0.9**100) <= 1e-12
    R2 = float(prob.x0 @ prob.x0)
    assert tr.output_gap <= 10.0 * R2 / (2 * 100) + 1e-9


def test_gm_trace_bookkeeping():
    prob = quad_problem(3, x0=[1.0, 2.0, -1.0])
    oracle = GradOracle(prob, NoiseSpec.gaussian(0.5, seed=3), batch_size=4)
    model = linear_model(oracle)
    tr = run_gm(prob, model, prob.x0, 12)
    ks = [rec.k for rec in tr.records]
    assert ks == list(range(13))
    calls = [rec.oracle_calls for rec in tr.records]
    assert calls == [4 * k for k in range(13)]


def test_fgm_first_step_hand_simulation():
    prob = quad_problem(2, x0=[1.0, 0.0])
    model = linear_model(GradOracle(prob))
    tr = run_fgm(prob, model, prob.x0, 1)
    rec = tr.records[-1]
    assert rec.A == 1.0
    assert np.allclose(rec.x, [0.0, 0.0], atol=1e-15)
    assert tr.output_gap <= 0.5 * 1.0**2  # R^2 / (2 A_1)


def test_fgm_a_sequence_is_problem_independent():
    p1 = quad_problem(2, x0=[1.0, 1.0])
    p2 = quad_problem(5, diag=[0.1, 0.3, 0.5, 0.7, 1.0], x0=RNG.normal(size=5))
    t1 = run_fgm(p1, linear_model(GradOracle(p1)), p1.x0, 10)
    t2 = run_fgm(p2, linear_model(GradOracle(p2)), p2.x0, 10)
    A1 = [rec.A for rec in t1.records]
    A2 = [rec.A for rec in t2.records]
    assert np.allclose(A1, A2, rtol=1e-12)
    assert abs(A1[2] - (3 + math.sqrt(5)) / 2) <= 1e-12
    assert all(b > a for a, b in zip(A1[1:], A1[2:]))


def test_fgm_bound_and_a_growth():
    inst = make_quadratic(n=20, L=10.0, mu=0.0, seed=5, R=2.0)
    prob = inst.problem
    tr = run_fgm(prob, linear_model(GradOracle(prob)), inst.x0, 200)
    R0 = prob.start_radius(inst.x0)
    for rec in tr.records[1:]:
        assert rec.f_value - prob.f_star <= R0**2 / (2 * rec.A) + 1e-9
    assert tr.records[-1].A >= 200**2 / (4 * 10.0)


def test_fgm_feasibility_on_constrained_sets():
    for Q in (Ball(center=np.zeros(3), radius=1.0), Simplex(3)):
        x0 = Q.project(np.array([1.0, 0.4, -0.2]))
        prob = Problem(n=3, f=lambda x: 0.5 * float(x @ x), grad_exact=lambda x: x,
                       L=1.0, Q=Q, R=2.0, x0=x0)
        tr = run_fgm(prob, linear_model(GradOracle(prob)), x0, 40)
        for rec in tr.records:
            for pt in (rec.x, rec.y, rec.u):
                if pt is not None:
                    assert Q.contains(pt, tol=1e-8)


def test_fgm_strongly_convex_overflow_guard():
    prob = quad_problem(2, diag=[0.9, 1.0], x0=[1.0, 1.0], mu=0.9)
    model = linear_model(GradOracle(prob))
    assert model.mu_model == 0.9
    tr = run_fgm(prob, model, prob.x0, 5000)
    assert tr.truncated
    assert tr.records[-1].A <= 1e300 * 4  # one step past the guard at most


def test_fgm_composite_runs_and_bound_holds():
    # lasso-like composite with exact gradients on a tiny instance
    rng = np.random.default_rng(6)
    A = rng.standard_normal((12, 6)) / np.sqrt(12)
    b = A @ rng.standard_normal(6)
    L = float(np.linalg.eigvalsh(A.T @ A).max()) * (1 + 1e-9)
    lam = 0.05
    Q = FullSpace(6)
    smooth = Problem(n=6, f=lambda x: 0.5 * float((A @ x - b) @ (A @ x - b)),
                     grad_exact=lambda x: A.T @ (A @ x - b), L=L, Q=Q, R=5.0)
    full = Problem(n=6, f=lambda x: smooth.f(x) + lam * float(np.abs(x).sum()),
                   L=L, Q=Q, R=5.0)
    model = composite_model(CompositeSpec(GradOracle(smooth), L1(lam)))
    x0 = np.zeros(6)
    tr = run_fgm(full, model, x0, 300, check_bounds=False)
    ref = run_fgm(full, composite_model(CompositeSpec(GradOracle(smooth), L1(lam))),
                  rng.standard_normal(6), 3000, check_bounds=False)
    f_ref = full.f(ref.output_point)
    gap = full.f(tr.output_point) - f_ref
    R0 = np.linalg.norm(x0 - ref.output_point)
    assert gap <= R0**2 / (2 * tr.records[-1].A) + 1e-9


def test_sgd_zero_noise_exact_step():
    prob = quad_problem(2, x0=[3.0, -1.0])
    oracle = GradOracle(prob)
    tr = run_sgd_small_step(prob, oracle, 1.0, prob.x0, 1)
    assert np.allclose(tr.records[-1].x, [0.0, 0.0], atol=1e-15)


def test_sgd_zero_noise_monotone_descent():
    prob = quad_problem(3, diag=[0.4, 0.7, 1.0], x0=[1.0, 1.0, 1.0])
    tr = run_sgd_small_step(prob, GradOracle(prob), 0.5, prob.x0, 50)
    vals = [rec.f_value for rec in tr.records]
    assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))


def test_sgd_output_is_plain_average():
    prob = quad_problem(2, x0=[1.0, 1.0])
    oracle = GradOracle(prob, NoiseSpec.gaussian(0.3, seed=9))
    tr = run_sgd_small_step(prob, oracle, 0.4, prob.x0, 20)
    xs = np.stack([rec.x for rec in tr.records[1:]])
    assert np.allclose(tr.output_point, xs.mean(axis=0), atol=1e-12)
    assert tr.records[-1].oracle_calls == 20


def test_sgd_step_contract():
    prob = quad_problem(2)
    with pytest.raises(ContractError):
        run_sgd_small_step(prob, GradOracle(prob), 1.5, prob.x0, 5)
    with pytest.raises(ContractError):
        run_sgd_small_step(prob, GradOracle(prob), 0.0, prob.x0, 5)


def test_solver_wraps_subproblem_failure_with_iteration():
    prob = Problem(n=3, f=lambda x: 0.5 * float(x @ x), grad_exact=lambda x: x,
                   L=1.0, Q=Simplex(3), R=2.0)
    model = composite_model(CompositeSpec(GradOracle(prob), L1(0.5)))
    x0 = np.full(3, 1 / 3)
    with pytest.raises(SolverStepError) as err:
        run_gm(prob, model, x0, 3)
    assert err.value.iteration == 0


def test_guarantee_tripwire_fires_on_understated_L():
    # declaring L below the true smoothness makes the step too long; the
    # per-run bound check must catch it
    prob = Problem(n=2, f=lambda x: 0.5 * float(x @ x) * 4.0,
                   grad_exact=lambda x: 4.0 * x, L=1.0, Q=FullSpace(2),
                   x_star=np.zeros(2), f_star=0.0, R=1.0, x0=np.array([1.0, 0.0]))
    with pytest.raises(GuaranteeViolationError):
        run_gm(prob, linear_model(GradOracle(prob)), prob.x0, 20)


def test_infeasible_start_rejected():
    prob = quad_problem(2, Q=Simplex(2), x0=[0.5, 0.5])
    with pytest.raises(ContractError):
        run_gm(prob, linear_model(GradOracle(prob)), np.array([2.0, 2.0]), 3)
