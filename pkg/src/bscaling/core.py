"""Sample B-scaling fit: moment matrices, whitened eigenproblem, B-mean and B-variance.

Each measurement is rescaled to [0, 1], expanded in a clamped B-spline basis
with quantile knots, and the coefficient vector minimizing the in-sample
dispersion of the transformed measurements around their average (under unit
variance of that average) is found from the smallest eigenvector of
``Sigma^{-1/2} Lambda Sigma^{-1/2}``.

Because B-spline bases sum to one, adding a constant to one transform leaves
the variance of the average unchanged, so ``Sigma_n`` is singular along the
per-block constant directions.  The eigenproblem is therefore solved in
per-block contrast coordinates (coefficients orthogonal to the constant) with
the centered dispersion matrix, and the per-block constants are chosen
afterwards so every transform has in-sample mean zero.  That choice is the
exact minimizer of the dispersion over the constants.
"""

from __future__ import annotations

import warnings as _warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import numerics
from .errors import (
    BScalingError,
    DegenerateMeasurement,
    DimensionMismatch,
    InsufficientData,
    NonFinite,
    SingularMatrix,
)
from .spline_basis import KnotSet, basis_design, make_quantile_knots, roughness_penalty

DEFAULT_ORDER = 4
DEFAULT_K0_GRID = tuple(range(11, 26))
DEFAULT_RIDGE = 1e-8
RIDGE_CONDITION = 1e12
TIE_TOL = 1e-10
# B-variances closer than this count as equal when selecting the knot count.
BVAR_TIE_TOL = 1e-10


@dataclass(frozen=True)
class FusionInput:
    data: np.ndarray
    column_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.array(self.data, dtype=float)
        if X.ndim != 2:
            raise DimensionMismatch("data must be a 2-D array (rows x measurements)")
        n, K = X.shape
        if n < 2:
            raise InsufficientData("need at least 2 observations")
        if K < 2:
            raise DimensionMismatch("need at least 2 measurements")
        if not np.all(np.isfinite(X)):
            raise NonFinite("data contains NaN or Inf")
        names = tuple(self.column_names) or tuple(f"w{k + 1}" for k in range(K))
        if len(names) != K:
            raise DimensionMismatch(f"{len(names)} column names for {K} columns")
        X.setflags(write=False)
        object.__setattr__(self, "data", X)
        object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def K(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class RescaleParams:
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.mins, dtype=float)
        hi = np.asarray(self.maxs, dtype=float)
        if lo.shape != hi.shape:
            raise DimensionMismatch("mins and maxs differ in length")
        if np.any(hi <= lo):
            raise DegenerateMeasurement("every column needs max > min")
        object.__setattr__(self, "mins", lo)
        object.__setattr__(self, "maxs", hi)

    def apply(self, rows) -> np.ndarray:
        """Map onto the training [0, 1] range; values are not clamped here."""
        X = np.asarray(rows, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.mins.size:
            raise DimensionMismatch(f"expected {self.mins.size} columns, got {X.shape[1]}")
        return (X - self.mins) / (self.maxs - self.mins)


def fit_rescaler(inp: FusionInput) -> RescaleParams:
    X = inp.data
    lo, hi = X.min(axis=0), X.max(axis=0)
    const = np.flatnonzero(hi <= lo)
    if const.size:
        names = ", ".join(inp.column_names[k] for k in const)
        raise DegenerateMeasurement(f"constant measurement(s): {names}")
    return RescaleParams(lo, hi)


@dataclass(frozen=True)
class CenteringConstant:
    Q: np.ndarray
    one_over_K: np.ndarray


def centering(K: int) -> CenteringConstant:
    return CenteringConstant(np.eye(K) - np.full((K, K), 1.0 / K), np.full(K, 1.0 / K))


def _block_index(sizes: Sequence[int]) -> np.ndarray:
    return np.repeat(np.arange(len(sizes)), sizes)


@dataclass(frozen=True)
class MomentPair:
    """``Lambda_n = E_n[N Q N^T]`` and ``Sigma_n = var_n(N 1 / K)`` with block sizes.

    ``Lambda_centered`` is the same dispersion matrix computed from centered
    basis rows, i.e. the dispersion after the optimal per-block constants.
    """

    Lambda_n: np.ndarray
    Sigma_n: np.ndarray
    mean_z: np.ndarray
    block_sizes: tuple[int, ...]

    @property
    def K(self) -> int:
        return len(self.block_sizes)

    @property
    def Lambda_centered(self) -> np.ndarray:
        K = self.K
        mu = K * self.mean_z
        idx = _block_index(self.block_sizes)
        q = centering(K).Q[np.ix_(idx, idx)]
        return self.Lambda_n - q * np.outer(mu, mu)


def assemble_moments(designs: Sequence[np.ndarray]) -> MomentPair:
    designs = [np.asarray(D, dtype=float) for D in designs]
    if len(designs) < 2:
        raise DimensionMismatch("need at least 2 design matrices")
    n = designs[0].shape[0]
    if any(D.ndim != 2 or D.shape[0] != n for D in designs):
        raise DimensionMismatch("design matrices must share the number of rows")
    K = len(designs)
    sizes = tuple(D.shape[1] for D in designs)
    X = np.hstack(designs)
    G = X.T @ X / n
    xbar = X.mean(axis=0)
    idx = _block_index(sizes)
    q = centering(K).Q[np.ix_(idx, idx)]
    Lam = numerics.symmetrize(q * G)
    Xc = X - xbar
    Sig = numerics.symmetrize(Xc.T @ Xc / n) / K**2
    return MomentPair(Lam, Sig, xbar / K, sizes)


def contrast_basis(ell: int) -> np.ndarray:
    """Orthonormal (Helmert) basis of the coefficients orthogonal to the constant vector."""
    C = np.zeros((ell, ell - 1))
    for j in range(1, ell):
        C[:j, j - 1] = 1.0
        C[j, j - 1] = -j
        C[:, j - 1] /= np.sqrt(j * (j + 1))
    return C


def contrast_matrix(block_sizes: Sequence[int]) -> np.ndarray:
    """Block-diagonal contrast map from reduced to full coefficients."""
    p = sum(block_sizes)
    T = np.zeros((p, p - len(block_sizes)))
    r0 = c0 = 0
    for ell in block_sizes:
        T[r0:r0 + ell, c0:c0 + ell - 1] = contrast_basis(ell)
        r0 += ell
        c0 += ell - 1
    return T


def _block_diag(blocks: Sequence[np.ndarray]) -> np.ndarray:
    p = sum(b.shape[0] for b in blocks)
    out = np.zeros((p, p))
    o = 0
    for b in blocks:
        s = b.shape[0]
        out[o:o + s, o:o + s] = b
        o += s
    return out


@dataclass(frozen=True)
class ReducedProblem:
    """The eigenproblem in contrast coordinates, plus its solution."""

    Lambda: np.ndarray
    Sigma: np.ndarray
    Sigma_inv_sqrt: np.ndarray
    R: np.ndarray
    eig: numerics.EigenDecomp
    b: np.ndarray
    a: np.ndarray
    d_min: float
    ridge_applied: float
    warnings: tuple[str, ...]


def solve_reduced(Lam, Sig, penalty=None, ridge: float = DEFAULT_RIDGE) -> ReducedProblem:
    """Minimize ``a^T Lam a`` subject to ``a^T Sig a = 1`` by whitening.

    ``ridge`` (relative to the mean eigenvalue) is applied to ``Sig`` only when
    its condition number exceeds 1e12; ``ridge=0`` turns that into an error.
    When the smallest eigenvalue of the whitened matrix is tied, the tied
    eigenspace is searched for the direction with the least ``penalty``.
    """
    notes = []
    applied = 0.0
    cond = numerics.condition_number(Sig)
    if cond > RIDGE_CONDITION:
        if ridge <= 0:
            raise SingularMatrix(f"Sigma_n condition number {cond:.3e} exceeds {RIDGE_CONDITION:.0e}")
        applied = ridge
        notes.append(f"ridge {ridge:g} applied to Sigma_n (condition number {cond:.3e})")
    Sih = numerics.inv_sqrt_psd(Sig, applied)
    R = numerics.symmetrize(Sih @ Lam @ Sih)
    eig = numerics.sym_eig(R)
    d = eig.eigenvalues
    V = eig.eigenvectors
    scale = max(np.max(np.abs(d)), 1.0)
    tied = np.flatnonzero(d - d[-1] <= TIE_TOL * scale)
    b = V[:, -1]
    if tied.size > 1:
        notes.append(
            f"smallest eigenvalue is tied ({tied.size} within {TIE_TOL:g} relative); "
            "picked the least rough direction in the tied eigenspace"
        )
        if penalty is not None:
            W = V[:, tied]
            P = W.T @ Sih @ penalty @ Sih @ W
            sub = numerics.sym_eig(P)
            b = W @ sub.eigenvectors[:, -1]
            b /= np.linalg.norm(b)
    a = Sih @ b
    a = a / np.sqrt(a @ Sig @ a)
    d_min = float(a @ Lam @ a)
    return ReducedProblem(Lam, Sig, Sih, R, eig, b, a, d_min, applied, tuple(notes))


@dataclass(frozen=True)
class FittedBScaling:
    """A fitted fusion.

    ``a_hat`` stacks the per-measurement coefficient blocks (block ``k`` has
    ``knots[k].basis_count`` entries) and already contains the per-block
    constants, so ``f_k(w) = a_hat_k . N_k(w)``.  ``b_hat`` and
    ``eigenvalues`` live in the contrast coordinates of the eigenproblem.
    """

    rescale: RescaleParams
    knots: tuple[KnotSet, ...]
    a_hat: np.ndarray
    b_hat: np.ndarray
    eigenvalues: np.ndarray
    d_min: float
    b_variance: float
    sign: float
    column_names: tuple[str, ...]
    n: int
    k0: int | None = None
    ridge_applied: float = 0.0
    warnings: tuple[str, ...] = field(default=())

    @property
    def K(self) -> int:
        return len(self.knots)

    @property
    def order(self) -> int:
        return self.knots[0].order

    @property
    def block_sizes(self) -> tuple[int, ...]:
        return tuple(ks.basis_count for ks in self.knots)

    @property
    def block_offsets(self) -> tuple[int, ...]:
        return tuple(int(v) for v in np.concatenate([[0], np.cumsum(self.block_sizes)]))

    def blocks(self) -> list[np.ndarray]:
        o = self.block_offsets
        return [self.a_hat[o[k]:o[k + 1]] for k in range(self.K)]

    def a_reduced(self) -> np.ndarray:
        """Coefficients in contrast coordinates (the per-block constants dropped)."""
        return contrast_matrix(self.block_sizes).T @ self.a_hat


def rescaled(rescale: RescaleParams, rows) -> np.ndarray:
    return np.clip(rescale.apply(rows), 0.0, 1.0)


def designs_for(knots: Sequence[KnotSet], unit_rows: np.ndarray) -> list[np.ndarray]:
    return [basis_design(ks, unit_rows[:, k]) for k, ks in enumerate(knots)]


def _check_collapse(ks: KnotSet, k0: int, m: int, name: str):
    need = min(k0, m) + 1
    if len(ks.knots) < need:
        raise DegenerateMeasurement(
            f"measurement {name}: quantile knots collapsed to {len(ks.knots)} distinct knots "
            f"(need at least {need})"
        )


def fit_bscaling(
    inp: FusionInput,
    k0: int = 11,
    m: int = DEFAULT_ORDER,
    ridge: float = DEFAULT_RIDGE,
    *,
    knots: Sequence[KnotSet] | None = None,
    rescale: RescaleParams | None = None,
) -> FittedBScaling:
    """Fit B-scaling on ``inp``.

    ``knots`` and ``rescale`` may be supplied to hold the spline spaces fixed
    (used when studying sampling variability); otherwise they come from the data.
    """
    if not isinstance(inp, FusionInput):
        inp = FusionInput(np.asarray(inp))
    rescale = rescale if rescale is not None else fit_rescaler(inp)
    U = rescaled(rescale, inp.data)
    if knots is None:
        knots = []
        for k in range(inp.K):
            ks = make_quantile_knots(U[:, k], k0, m)
            _check_collapse(ks, k0, m, inp.column_names[k])
            knots.append(ks)
    knots = tuple(knots)
    if len(knots) != inp.K:
        raise DimensionMismatch(f"{len(knots)} knot sets for {inp.K} measurements")
    sizes = [ks.basis_count for ks in knots]
    p_red = sum(sizes) - inp.K
    if inp.n <= p_red:
        raise InsufficientData(f"n = {inp.n} must exceed the number of free coefficients {p_red}")

    designs = designs_for(knots, U)
    mom = assemble_moments(designs)
    T = contrast_matrix(sizes)
    Lam = numerics.symmetrize(T.T @ mom.Lambda_centered @ T)
    Sig = numerics.symmetrize(T.T @ mom.Sigma_n @ T)
    pen = T.T @ _block_diag([roughness_penalty(ks) for ks in knots]) @ T
    sol = solve_reduced(Lam, Sig, pen, ridge)

    a_full = T @ sol.a
    o = np.concatenate([[0], np.cumsum(sizes)])
    xbar = inp.K * mom.mean_z
    for k in range(inp.K):
        blk = slice(o[k], o[k + 1])
        a_full[blk] -= a_full[blk] @ xbar[blk]
    sign = numerics.canonical_sign(a_full)
    a_full = sign * a_full
    b = sign * sol.b

    F = np.column_stack([designs[k] @ a_full[o[k]:o[k + 1]] for k in range(inp.K)])
    bvar = float(np.mean(np.mean((F - F.mean(axis=1, keepdims=True)) ** 2, axis=1)))

    for msg in sol.warnings:
        _warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return FittedBScaling(
        rescale=rescale,
        knots=knots,
        a_hat=a_full,
        b_hat=b,
        eigenvalues=sol.eig.eigenvalues,
        d_min=sol.d_min,
        b_variance=bvar,
        sign=sign,
        column_names=inp.column_names,
        n=inp.n,
        k0=k0,
        ridge_applied=sol.ridge_applied,
        warnings=sol.warnings,
    )


def _rows(model: FittedBScaling, rows) -> np.ndarray:
    X = np.asarray(rows.data if isinstance(rows, FusionInput) else rows, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.K:
        raise DimensionMismatch(f"expected {model.K} columns, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise NonFinite("rows contain NaN or Inf")
    return X


def component_transforms(model: FittedBScaling, rows) -> np.ndarray:
    """Column ``k`` holds the fitted transform of measurement ``k``."""
    U = rescaled(model.rescale, _rows(model, rows))
    return np.column_stack(
        [basis_design(ks, U[:, k]) @ a for k, (ks, a) in enumerate(zip(model.knots, model.blocks()))]
    )


def predict_bmean(model: FittedBScaling, rows) -> np.ndarray:
    return component_transforms(model, rows).mean(axis=1)


def b_variance(model: FittedBScaling, inp) -> tuple[np.ndarray, float]:
    F = component_transforms(model, inp)
    per_row = np.mean((F - F.mean(axis=1, keepdims=True)) ** 2, axis=1)
    return per_row, float(per_row.mean())


class KnotScore(NamedTuple):
    k0: int
    b_variance: float
    d_min: float
    error: str | None = None


def select_k0(
    inp: FusionInput,
    grid: Sequence[int] = DEFAULT_K0_GRID,
    m: int = DEFAULT_ORDER,
    ridge: float = DEFAULT_RIDGE,
) -> tuple[int, list[KnotScore]]:
    """Knot count with the smallest aggregate B-variance (smallest k0 on ties)."""
    grid = list(grid)
    if not grid:
        raise ValueError("k0 grid is empty")
    table = []
    for k0 in grid:
        try:
            with _warnings.catch_warnings():
                _warnings.simplefilter("ignore", RuntimeWarning)
                fit = fit_bscaling(inp, k0, m, ridge)
        except BScalingError as exc:
            table.append(KnotScore(k0, np.nan, np.nan, f"{type(exc).__name__}: {exc}"))
            continue
        table.append(KnotScore(k0, fit.b_variance, fit.d_min))
    ok = [row for row in table if row.error is None]
    if not ok:
        raise InsufficientData("no k0 in the grid could be fitted: " + "; ".join(r.error for r in table))
    low = min(row.b_variance for row in ok)
    best = min(row.k0 for row in ok if row.b_variance <= low + BVAR_TIE_TOL)
    return best, table
