"""Simple regression of a (log) response on a fused score."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatch, DomainError, ZeroVariance


class R2Result(NamedTuple):
    alpha0: float
    alpha1: float
    r2: float
    adj_r2: float


def adjusted_r2(x, g, log_response: bool = False) -> R2Result:
    """OLS of ``g`` (or ``log g``) on ``x`` with an intercept."""
    x = np.asarray(x, dtype=float).ravel()
    g = np.asarray(g, dtype=float).ravel()
    if x.size != g.size:
        raise DimensionMismatch("x and response differ in length")
    n = x.size
    if n < 3:
        raise DimensionMismatch("need at least 3 observations")
    if log_response:
        if np.any(g <= 0):
            raise DomainError("log of a nonpositive response")
        g = np.log(g)
    xc = x - x.mean()
    sxx = xc @ xc
    if sxx == 0:
        raise ZeroVariance("predictor is constant")
    gc = g - g.mean()
    alpha1 = (xc @ gc) / sxx
    alpha0 = g.mean() - alpha1 * x.mean()
    sst = gc @ gc
    resid = gc - alpha1 * xc
    r2 = 1.0 - (resid @ resid) / sst if sst > 0 else 1.0
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - 2)
    return R2Result(float(alpha0), float(alpha1), float(r2), float(adj))
