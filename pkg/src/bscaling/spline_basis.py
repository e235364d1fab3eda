"""Clamped B-spline spaces on [0, 1] with empirical-quantile knots."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMeasurement, InsufficientData


@dataclass(frozen=True)
class KnotSet:
    """Spline space of a given order on the breakpoints ``knots``.

    ``knots`` holds the distinct breakpoints ``0 = t_0 < ... < t_k0 = 1``.
    The boundary knots are repeated ``order`` times when the basis is
    evaluated, so the space has ``k0 + order - 1`` basis functions.
    """

    order: int
    knots: tuple[float, ...]

    def __post_init__(self):
        t = np.asarray(self.knots, dtype=float)
        if self.order < 1:
            raise ValueError("spline order must be >= 1")
        if t.size < 2 or t[0] != 0.0 or t[-1] != 1.0:
            raise ValueError("knots must start at 0 and end at 1")
        if np.any(np.diff(t) <= 0):
            raise ValueError("knots must be strictly increasing")
        object.__setattr__(self, "knots", tuple(float(v) for v in t))

    @property
    def n_intervals(self) -> int:
        return len(self.knots) - 1

    @property
    def basis_count(self) -> int:
        return self.n_intervals + self.order - 1

    @property
    def full_knots(self) -> np.ndarray:
        """Knot vector with boundary knots repeated ``order`` times."""
        t = np.asarray(self.knots)
        m = self.order
        return np.concatenate([np.zeros(m - 1), t, np.ones(m - 1)])

    def greville(self) -> np.ndarray:
        """Greville abscissae; the identity has these as its coefficients."""
        t = self.full_knots
        m = self.order
        if m == 1:
            return 0.5 * (t[:-1] + t[1:])
        return np.array([t[j + 1:j + m].mean() for j in range(self.basis_count)])


def make_quantile_knots(values, k0: int, m: int = 4) -> KnotSet:
    """Knots at the ``j/k0`` empirical quantiles of ``values``.

    Interior quantiles that coincide with each other or with the boundary
    are dropped, so heavily tied data yields fewer intervals than ``k0``.
    """
    x = np.asarray(values, dtype=float).ravel()
    if k0 < 1 or m < 1:
        raise ValueError("k0 and m must be positive")
    if np.unique(x).size < 2:
        raise DegenerateMeasurement("measurement has fewer than 2 distinct values")
    if x.size < k0 + m:
        raise InsufficientData(f"need at least k0 + m = {k0 + m} values, got {x.size}")
    interior = np.quantile(x, np.arange(1, k0) / k0) if k0 > 1 else np.empty(0)
    interior = interior[(interior > 0.0) & (interior < 1.0)]
    knots = np.unique(np.concatenate([[0.0], interior, [1.0]]))
    return KnotSet(order=m, knots=tuple(knots))


def _design(ks: KnotSet, x: np.ndarray) -> np.ndarray:
    m = ks.order
    t = ks.full_knots
    ell = ks.basis_count
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    # Index of the knot span [t[s], t[s+1]) holding x; x = 1 joins the last span.
    span = np.searchsorted(t, x, side="right") - 1
    span = np.clip(span, m - 1, ell - 1)

    n = x.size
    vals = np.zeros((n, m))
    vals[:, 0] = 1.0
    left = np.empty((n, m))
    right = np.empty((n, m))
    for j in range(1, m):
        left[:, j] = x - t[span + 1 - j]
        right[:, j] = t[span + j] - x
        saved = np.zeros(n)
        for r in range(j):
            denom = right[:, r + 1] + left[:, j - r]
            temp = vals[:, r] / denom
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        vals[:, j] = saved

    out = np.zeros((n, ell))
    rows = np.arange(n)[:, None]
    cols = span[:, None] - (m - 1) + np.arange(m)[None, :]
    out[rows, cols] = vals
    return out


def eval_basis(ks: KnotSet, x: float) -> np.ndarray:
    """All ``basis_count`` basis functions at one point (clamped to [0, 1])."""
    return _design(ks, np.array([x], dtype=float))[0]


def basis_design(ks: KnotSet, values) -> np.ndarray:
    """Design matrix whose row ``i`` is ``eval_basis(ks, values[i])``."""
    return _design(ks, np.asarray(values, dtype=float).ravel())


def roughness_penalty(ks: KnotSet) -> np.ndarray:
    """Quadratic penalty on coefficients that vanishes exactly on linear functions.

    Second divided differences of the coefficients against the Greville
    abscissae (first differences for step functions).
    """
    ell = ks.basis_count
    xi = ks.greville()
    if ks.order == 1:
        if ell < 2:
            return np.zeros((ell, ell))
        D = np.zeros((ell - 1, ell))
        idx = np.arange(ell - 1)
        D[idx, idx] = -1.0
        D[idx, idx + 1] = 1.0
        return D.T @ D
    if ell < 3:
        return np.zeros((ell, ell))
    D = np.zeros((ell - 2, ell))
    for j in range(ell - 2):
        h0 = xi[j + 1] - xi[j]
        h1 = xi[j + 2] - xi[j + 1]
        D[j, j] = 1.0 / h0
        D[j, j + 1] = -(1.0 / h0 + 1.0 / h1)
        D[j, j + 2] = 1.0 / h1
    return D.T @ D
