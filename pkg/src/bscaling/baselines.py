"""Reference fusers: principal components and one-dimensional classical MDS."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh
from scipy.spatial.distance import pdist, squareform

from . import numerics
from .errors import DimensionMismatch, NonFinite, ZeroVariance


@dataclass(frozen=True)
class CorrReport:
    per_method: dict
    rho_max: float
    rho_bar0: float


def pca_scores(data, standardize: bool = False):
    """Scores, loadings (columns) and variances, in decreasing-variance order.

    Columns are centered; ``standardize`` switches to the correlation matrix.
    """
    X = np.asarray(data, dtype=float)
    Xc = X - X.mean(axis=0)
    if standardize:
        sd = Xc.std(axis=0)
        if np.any(sd == 0):
            raise ZeroVariance("constant column cannot be standardized")
        Xc = Xc / sd
    cov = Xc.T @ Xc / X.shape[0]
    eig = numerics.sym_eig(cov)
    loadings = eig.eigenvectors
    return Xc @ loadings, loadings, eig.eigenvalues


def _abs_corr(u, v) -> float:
    u = np.asarray(u, dtype=float) - np.mean(u)
    v = np.asarray(v, dtype=float) - np.mean(v)
    su, sv = np.sqrt(u @ u), np.sqrt(v @ v)
    if su == 0 or sv == 0:
        raise ZeroVariance("correlation with a constant vector is undefined")
    return float(min(abs(u @ v) / (su * sv), 1.0))


def abs_corr(u, v) -> float:
    """``|Pearson correlation|``."""
    return _abs_corr(u, v)


def pc_max_corr(scores, y) -> float:
    """Largest ``|corr|`` between any score column and ``y``."""
    S = np.asarray(scores, dtype=float)
    out = 0.0
    for j in range(S.shape[1]):
        if np.ptp(S[:, j]) == 0:
            continue
        out = max(out, _abs_corr(S[:, j], y))
    return out


def pc_max_index(scores, y) -> int:
    S = np.asarray(scores, dtype=float)
    vals = [(_abs_corr(S[:, j], y) if np.ptp(S[:, j]) > 0 else -1.0) for j in range(S.shape[1])]
    return int(np.argmax(vals))


def mds_embed_1d(data) -> np.ndarray:
    """Classical (Torgerson) scaling of Euclidean row distances into one dimension."""
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if n < 3:
        raise DimensionMismatch("MDS needs at least 3 points")
    if not np.all(np.isfinite(X)):
        raise NonFinite("data contains NaN or Inf")
    D2 = squareform(pdist(X, "sqeuclidean"))
    # Double centering J D2 J without forming J.
    B = D2 - D2.mean(axis=0)[None, :]
    B -= B.mean(axis=1)[:, None]
    B *= -0.5
    lam, v = eigh(B, subset_by_index=[n - 1, n - 1])
    emb = np.sqrt(max(lam[0], 0.0)) * v[:, 0]
    return emb * numerics.canonical_sign(emb)


def strain(data, embedding) -> float:
    """Relative squared mismatch between original and embedded distances."""
    X = np.asarray(data, dtype=float)
    e = np.asarray(embedding, dtype=float).reshape(len(X), -1)
    d0 = pdist(X)
    d1 = pdist(e)
    return float(np.sum((d0 - d1) ** 2) / np.sum(d0**2))


def corr_metrics(data, candidates: dict, y) -> CorrReport:
    X = np.asarray(data, dtype=float)
    y = np.asarray(y, dtype=float)
    if any(len(v) != len(y) for v in candidates.values()) or X.shape[0] != len(y):
        raise DimensionMismatch("all vectors must have the same length")
    per_col = [_abs_corr(X[:, k], y) for k in range(X.shape[1])]
    per_method = {name: _abs_corr(v, y) for name, v in candidates.items()}
    return CorrReport(per_method, max(per_col), float(np.mean(per_col)))
