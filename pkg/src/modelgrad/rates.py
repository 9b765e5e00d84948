"""Power-law rate fitting on gap series: slope of log(gap) against log(k)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core import ContractError, Trace


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    window: tuple[int, int]


def estimate_rate(series: Union[Trace, np.ndarray, list], window: tuple[int, int],
                  f_star: Optional[float] = None, averaged: bool = False) -> RateFit:
    """Least-squares line fit of log(gap) vs log(k) over an iteration window.

    ``series`` is either a Trace (then ``f_star`` is required) or a gap array
    whose element i is the gap at iteration i + 1. Nonpositive gaps inside the
    window shrink it to the leading positive run, with a warning; fewer than
    five usable points is an error. A decay gap_k ~ C / k^p fits slope -p.
    """
    if isinstance(series, Trace):
        if f_star is None:
            raise ContractError("f_star is required to compute gaps from a trace")
        gaps = series.gaps(f_star, averaged=averaged)
    else:
        gaps = np.asarray(series, dtype=np.float64)
    ks = np.arange(1, gaps.size + 1)

    k_lo, k_hi = int(window[0]), int(window[1])
    if k_lo < 1 or k_hi < k_lo:
        raise ContractError("window must satisfy 1 <= k_min <= k_max")
    mask = (ks >= k_lo) & (ks <= min(k_hi, gaps.size))
    ks_w, gaps_w = ks[mask], gaps[mask]

    if np.any(gaps_w <= 0):
        first_bad = int(np.argmax(gaps_w <= 0))
        warnings.warn(
            f"nonpositive gap at k={ks_w[first_bad]}; shrinking fit window",
            stacklevel=2)
        ks_w, gaps_w = ks_w[:first_bad], gaps_w[:first_bad]
    if ks_w.size < 5:
        raise ContractError("fewer than 5 usable points in the fit window")

    lx, ly = np.log(ks_w.astype(np.float64)), np.log(gaps_w)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return RateFit(slope=float(slope), intercept=float(intercept), r_squared=r2,
                   window=(int(ks_w[0]), int(ks_w[-1])))
