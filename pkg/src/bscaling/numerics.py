"""Dense symmetric linear algebra used by the eigenproblem and the asymptotics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFinite, SingularMatrix

TIE_TOL = 1e-10


@dataclass(frozen=True)
class EigenDecomp:
    """Eigenvalues in descending order; column ``j`` of ``eigenvectors`` pairs with value ``j``."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def smallest(self) -> float:
        return float(self.eigenvalues[-1])

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.T


def canonical_sign(v: np.ndarray) -> float:
    """+1 or -1 so that the largest-magnitude entry (lowest index on ties) is positive."""
    v = np.asarray(v)
    j = int(np.argmax(np.abs(v)))
    return -1.0 if v[j] < 0 else 1.0


def symmetrize(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    return 0.5 * (S + S.T)


def sym_eig(S) -> EigenDecomp:
    S = np.asarray(S, dtype=float)
    if not np.all(np.isfinite(S)):
        raise NonFinite("matrix contains NaN or Inf")
    d, V = np.linalg.eigh(symmetrize(S))
    d = d[::-1].copy()
    V = V[:, ::-1].copy()
    for j in range(V.shape[1]):
        V[:, j] *= canonical_sign(V[:, j])
    return EigenDecomp(d, V)


def psd_power(S, power: float, ridge: float = 0.0) -> np.ndarray:
    """``S**power`` through the spectral decomposition, after an optional relative ridge."""
    S = symmetrize(S)
    r = S.shape[0]
    if ridge > 0:
        S = S + ridge * (np.trace(S) / r) * np.eye(r)
    eig = sym_eig(S)
    d = eig.eigenvalues
    if power < 0 and (d[-1] <= 1e-14 * max(d[0], 0.0) or d[-1] <= 0):
        raise SingularMatrix(
            f"smallest eigenvalue {d[-1]:.3e} is not positive relative to largest {d[0]:.3e}"
        )
    d = np.clip(d, 0.0, None)
    V = eig.eigenvectors
    return (V * d**power) @ V.T


def inv_sqrt_psd(S, ridge: float = 0.0) -> np.ndarray:
    """Symmetric inverse square root ``V diag(d^-1/2) V^T``.

    ``ridge`` is relative: ``ridge * tr(S)/r`` is added to the diagonal first.
    """
    return psd_power(S, -0.5, ridge)


def sqrt_psd(S, ridge: float = 0.0) -> np.ndarray:
    return psd_power(S, 0.5, ridge)


def condition_number(S) -> float:
    d = np.linalg.eigvalsh(symmetrize(S))
    if d[-1] <= 0:
        return np.inf
    if d[0] <= 0:
        return np.inf
    return float(d[-1] / d[0])


def kron(A, B) -> np.ndarray:
    return np.kron(np.asarray(A, dtype=float), np.asarray(B, dtype=float))


def vec(A) -> np.ndarray:
    """Column-stacking vectorization."""
    A = np.asarray(A)
    if A.ndim == 1:
        return A.copy()
    return A.reshape(-1, order="F")


def unvec(v, shape) -> np.ndarray:
    return np.asarray(v).reshape(shape, order="F")


@dataclass
class TieReport:
    """Indices whose shifted eigenvalue fell within tolerance of zero, apart from the pivot."""

    near_ties: list = field(default_factory=list)


def pinv_shifted_diag(d: float, Gamma, tol: float = TIE_TOL, report: TieReport | None = None):
    """Moore-Penrose inverse of ``d I - Gamma`` for diagonal ``Gamma``.

    ``Gamma`` may be given as a diagonal matrix or as the vector of its entries.
    Entries with ``|d - d_j| <= tol * max|d_i|`` are set to zero; any such entry
    other than exact equality is recorded in ``report``.
    """
    G = np.asarray(Gamma, dtype=float)
    g = np.diag(G) if G.ndim == 2 else G
    scale = np.max(np.abs(g)) if g.size else 0.0
    diff = d - g
    small = np.abs(diff) <= tol * scale
    out = np.zeros_like(g)
    out[~small] = 1.0 / diff[~small]
    if report is not None:
        hits = list(np.flatnonzero(small))
        exact = np.flatnonzero(diff == 0)
        if exact.size:
            hits.remove(exact[0])
        report.near_ties.extend(int(j) for j in hits)
    return np.diag(out)
