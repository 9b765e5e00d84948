"""Iteration-count and batch-size planning for a target accuracy.

Balances the three error sources of a stochastic run, deterministic decay
L R^2 / N^p, the subgaussian fluctuation sigma R / sqrt(N r), and the
accumulated per-step error N^(p-1) sigma^2 / (L r), so each is of order eps.
All hidden constants are taken as 1 and log factors dropped: the output is a
heuristic whose quality the harness validates empirically, not a certified
bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import ContractError


@dataclass(frozen=True)
class Plan:
    N: int
    r: int
    p: int
    predicted_calls: int
    eps: float
    diagnostics: dict = field(default_factory=dict)


def plan(eps: float, L: float, R: float, sigma: float, p: int) -> Plan:
    """Choose N iterations and batch size r for target accuracy eps.

    p = 1 plans for the plain gradient method, p = 2 for the accelerated
    one. N = ceil((L R^2 / eps)^(1/p)); r balances the noise terms and is
    floored at 1 (sigma = 0 gives the deterministic plan r = 1). Diagnostics
    report the three balanced terms at the chosen integers and their worst
    ratio to eps.
    """
    if p not in (1, 2):
        raise ContractError("p must be 1 or 2")
    if not (eps > 0 and L > 0 and R > 0):
        raise ContractError("eps, L, R must be positive")
    if sigma < 0:
        raise ContractError("sigma must be >= 0")

    base = L * R * R / eps
    N = max(1, math.ceil(base ** (1.0 / p)))
    if sigma == 0:
        r = 1
    else:
        # size the batch from the integer N so the accumulated term stays <= eps
        r = max(1, math.ceil((sigma * sigma / (L * eps)) * N ** (p - 1)))

    term_det = L * R * R / N ** p
    term_fluct = sigma * R / math.sqrt(N * r)
    term_accum = N ** (p - 1) * sigma * sigma / (L * r)
    worst = max(term_det, term_fluct, term_accum)
    diagnostics = {
        "term_deterministic": term_det,
        "term_fluctuation": term_fluct,
        "term_accumulated": term_accum,
        "c": worst / eps,
    }
    return Plan(N=N, r=r, p=p, predicted_calls=N * r, eps=eps, diagnostics=diagnostics)
