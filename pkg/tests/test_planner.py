import pytest

from modelgrad import ContractError, plan


def test_plan_deterministic_regime():
    for eps in (0.5, 0.01):
        for p in (1, 2):
            out = plan(eps, L=2.0, R=1.5, sigma=0.0, p=p)
            assert out.r == 1
            assert out.predicted_calls == out.N


def test_plan_p2_example():
    out = plan(0.01, L=1.0, R=1.0, sigma=1.0, p=2)
    assert out.N == 10
    assert out.r == 1000
    assert out.predicted_calls == 10_000
    assert out.diagnostics["c"] <= 1.0 + 1e-12


def test_plan_p1_example():
    out = plan(0.01, L=1.0, R=1.0, sigma=1.0, p=1)
    assert out.N == 100
    assert out.r == 100
    assert out.predicted_calls == 10_000


def test_plan_balanced_terms_are_order_eps():
    for eps in (0.3, 0.05, 0.004):
        for sigma in (0.2, 1.0, 4.0):
            for p in (1, 2):
                out = plan(eps, L=3.0, R=0.7, sigma=sigma, p=p)
                d = out.diagnostics
                for key in ("term_deterministic", "term_fluctuation", "term_accumulated"):
                    assert d[key] <= eps * (1.0 + 1e-12)
                assert d["c"] <= 1.0 + 1e-12


def test_plan_total_call_shape():
    # N r stays within a factor 2 of N + sigma^2 R^2 / eps^2
    L, R = 1.0, 1.0
    for eps in (0.2, 0.05, 0.01, 0.002):
        for sigma in (0.0, 0.5, 1.0, 3.0):
            for p in (1, 2):
                out = plan(eps, L, R, sigma, p)
                noise_calls = sigma**2 * R**2 / eps**2
                lo = max(out.N, noise_calls)
                hi = 2.0 * (out.N + noise_calls)
                assert lo <= out.predicted_calls <= hi


def test_plan_monotonicity():
    L, R, p = 1.0, 1.0, 2
    eps_grid = [0.5, 0.2, 0.1, 0.05, 0.02, 0.01]
    Ns = [plan(e, L, R, 1.0, p).N for e in eps_grid]
    rs = [plan(e, L, R, 1.0, p).r for e in eps_grid]
    assert all(b >= a for a, b in zip(Ns, Ns[1:]))
    assert all(b >= a for a, b in zip(rs, rs[1:]))
    sig_grid = [0.0, 0.5, 1.0, 2.0, 4.0]
    rs_sigma = [plan(0.05, L, R, s, p).r for s in sig_grid]
    assert all(b >= a for a, b in zip(rs_sigma, rs_sigma[1:]))


def test_plan_contracts():
    with pytest.raises(ContractError):
        plan(0.1, 1.0, 1.0, 1.0, p=3)
    with pytest.raises(ContractError):
        plan(-0.1, 1.0, 1.0, 1.0, p=1)
    with pytest.raises(ContractError):
        plan(0.1, 0.0, 1.0, 1.0, p=1)
    with pytest.raises(ContractError):
        plan(0.1, 1.0, 1.0, -1.0, p=1)
