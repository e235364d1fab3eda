"""Plug-in asymptotics for the fitted B-mean.

Influence functions of the moment matrices are evaluated at every training
row, their empirical second moments give ``Phi``, and the delta-method
operators (``Omega``, ``M_b``, ``M_a``) map ``Phi`` to the covariances of
``vec(R_n)``, ``b_hat`` and ``a_hat``.  Everything is done in the contrast
coordinates of the fit, where ``Sigma_n`` is nonsingular.

The prediction variance also carries the sampling variability of the
in-sample centering constants, because the fitted transforms are centered at
their training means.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from . import numerics
from .core import (
    FittedBScaling,
    FusionInput,
    centering,
    contrast_basis,
    _block_index,
    rescaled,
)
from .errors import DimensionMismatch, MemoryBudget, NegativeVariance, SingularMatrix
from .spline_basis import basis_design

MAX_DIM = 40
KRON_CONDITION = 1e12


@dataclass(frozen=True)
class InfluenceSamples:
    """Row ``i`` holds ``vec`` of the influence function at observation ``i``."""

    sigma_star: np.ndarray
    lambda_star: np.ndarray

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.sigma_star.shape[1])))

    def stacked(self) -> np.ndarray:
        return np.hstack([self.sigma_star, self.lambda_star])


@dataclass(frozen=True)
class Operators:
    Omega1: np.ndarray
    Omega2: np.ndarray
    M_b1: np.ndarray
    M_b2: np.ndarray
    M_a1: np.ndarray
    M_a2: np.ndarray
    kron_inv: np.ndarray

    @property
    def M_R(self) -> np.ndarray:
        return np.hstack([self.Omega1, self.Omega2])

    @property
    def M_b(self) -> np.ndarray:
        return np.hstack([self.M_b1, self.M_b2])

    @property
    def M_a(self) -> np.ndarray:
        return np.hstack([self.M_a1, self.M_a2])


@dataclass(frozen=True)
class AsymptoticModel:
    Phi: np.ndarray
    ops: Operators
    V: np.ndarray
    Gamma: np.ndarray
    Pi_R: np.ndarray
    Pi_b: np.ndarray
    Pi_a: np.ndarray
    # Per-row influence of the reduced coefficients, and the centered in-sample B-mean.
    a_star: np.ndarray
    bmean_centered: np.ndarray
    z_mean: np.ndarray
    n: int
    tie_report: numerics.TieReport

    @property
    def Phi11(self):
        h = self.Phi.shape[0] // 2
        return self.Phi[:h, :h]

    @property
    def Phi12(self):
        h = self.Phi.shape[0] // 2
        return self.Phi[:h, h:]

    @property
    def Phi21(self):
        h = self.Phi.shape[0] // 2
        return self.Phi[h:, :h]

    @property
    def Phi22(self):
        h = self.Phi.shape[0] // 2
        return self.Phi[h:, h:]


@dataclass(frozen=True)
class PredictionCI:
    mu_hat: float
    sigma_mu: float
    level: float
    lower: float
    upper: float
    n: int

    @property
    def width(self) -> float:
        return self.upper - self.lower


def reduced_designs(model: FittedBScaling, rows) -> list[np.ndarray]:
    """Per-measurement designs in contrast coordinates (constant direction removed)."""
    X = rows.data if isinstance(rows, FusionInput) else np.asarray(rows, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    U = rescaled(model.rescale, X)
    return [basis_design(ks, U[:, k]) @ contrast_basis(ks.basis_count) for k, ks in enumerate(model.knots)]


def _centered_moments(designs):
    designs = [np.asarray(D, dtype=float) for D in designs]
    n = designs[0].shape[0]
    if any(D.shape[0] != n for D in designs):
        raise DimensionMismatch("design matrices must share the number of rows")
    K = len(designs)
    X = np.hstack(designs)
    C = X - X.mean(axis=0)
    Zc = C / K
    idx = _block_index([D.shape[1] for D in designs])
    q = centering(K).Q[np.ix_(idx, idx)]
    outer_z = np.einsum("ni,nj->nij", Zc, Zc)
    outer_x = np.einsum("ni,nj->nij", C, C) * q
    return outer_z, outer_x, Zc


def influence_from_designs(designs) -> InfluenceSamples:
    """Influence samples of the covariance ``Sigma_n`` and the centered dispersion ``Lambda_n``."""
    outer_z, outer_x, _ = _centered_moments(designs)
    n, r, _ = outer_z.shape
    # vec is column stacking; the matrices are symmetric so a C-order reshape agrees.
    s_star = (outer_z - outer_z.mean(axis=0)).reshape(n, r * r)
    l_star = (outer_x - outer_x.mean(axis=0)).reshape(n, r * r)
    return InfluenceSamples(s_star, l_star)


def influence_samples(model: FittedBScaling, inp) -> InfluenceSamples:
    return influence_from_designs(reduced_designs(model, inp))


def estimate_phi(samples: InfluenceSamples, max_dim: int | None = MAX_DIM) -> np.ndarray:
    """Empirical second moment of the stacked influence samples ``(vec Sigma*, vec Lambda*)``."""
    r = samples.dim
    if max_dim is not None and r > max_dim:
        raise MemoryBudget(f"eigenproblem dimension {r} exceeds the inference guard {max_dim}")
    S = samples.stacked()
    n = S.shape[0]
    return numerics.symmetrize(S.T @ S / n)


def asymptotic_operators(Lambda, Sigma, b_hat, eig: numerics.EigenDecomp | None = None,
                         tie_report: numerics.TieReport | None = None) -> Operators:
    Lambda = np.asarray(Lambda, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    b = np.asarray(b_hat, dtype=float)
    r = Sigma.shape[0]
    I = np.eye(r)
    se = numerics.sym_eig(Sigma)
    d = se.eigenvalues
    if d[-1] <= 0:
        raise SingularMatrix("Sigma_n is not positive definite")
    U = se.eigenvectors
    sd = np.sqrt(d)
    S_ih = (U / sd) @ U.T
    # (Sigma x Sigma^1/2 + Sigma^1/2 x Sigma)^-1 from the shared eigenbasis.
    kvals = np.kron(d, sd) + np.kron(sd, d)
    if kvals.max() / kvals.min() > KRON_CONDITION:
        raise SingularMatrix(
            f"Sigma kron Sigma^1/2 sum has condition number {kvals.max() / kvals.min():.3e}"
        )
    UU = np.kron(U, U)
    kron_inv = (UU / kvals) @ UU.T
    if eig is None:
        eig = numerics.sym_eig(S_ih @ Lambda @ S_ih)
    A = S_ih @ Lambda
    L1 = np.kron(A, I) + np.kron(I, A)
    Omega1 = -L1 @ kron_inv
    Omega2 = np.kron(S_ih, S_ih)
    V = eig.eigenvectors
    P = V @ numerics.pinv_shifted_diag(eig.smallest, eig.eigenvalues, report=tie_report) @ V.T
    Omega3 = np.kron(b[None, :], P)
    M_b1 = Omega3 @ Omega1
    M_b2 = Omega3 @ Omega2
    M_a1 = -np.kron(b[None, :], I) @ kron_inv + S_ih @ M_b1
    M_a2 = S_ih @ M_b2
    return Operators(Omega1, Omega2, M_b1, M_b2, M_a1, M_a2, kron_inv)


def covariances(ops: Operators, Phi) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    Phi = np.asarray(Phi, dtype=float)
    out = []
    for M in (ops.M_R, ops.M_b, ops.M_a):
        if M.shape[1] != Phi.shape[0]:
            raise DimensionMismatch(f"operator has {M.shape[1]} columns, Phi is {Phi.shape[0]} square")
        out.append(numerics.symmetrize(M @ Phi @ M.T))
    return tuple(out)


def asymptotic_model(model: FittedBScaling, inp, max_dim: int | None = MAX_DIM) -> AsymptoticModel:
    """All plug-in asymptotic quantities for ``model`` evaluated on its training data."""
    if model.ridge_applied > 0:
        raise SingularMatrix("inference needs a well-conditioned Sigma_n, but the fit used a ridge")
    designs = reduced_designs(model, inp)
    r = sum(D.shape[1] for D in designs)
    if max_dim is not None and r > max_dim:
        raise MemoryBudget(f"eigenproblem dimension {r} exceeds the inference guard {max_dim}")
    outer_z, outer_x, Zc = _centered_moments(designs)
    n = Zc.shape[0]
    Sigma = numerics.symmetrize(outer_z.mean(axis=0))
    Lambda = numerics.symmetrize(outer_x.mean(axis=0))
    samples = InfluenceSamples((outer_z - Sigma).reshape(n, r * r), (outer_x - Lambda).reshape(n, r * r))
    del outer_z, outer_x
    z_mean = np.hstack(designs).mean(axis=0) / len(designs)
    Sih = numerics.inv_sqrt_psd(Sigma)
    eig = numerics.sym_eig(Sih @ Lambda @ Sih)
    a_red = model.a_reduced()
    b = numerics.sqrt_psd(Sigma) @ a_red
    report = numerics.TieReport()
    ops = asymptotic_operators(Lambda, Sigma, b, eig, report)
    Phi = estimate_phi(samples, max_dim)
    Pi_R, Pi_b, Pi_a = covariances(ops, Phi)
    a_star = samples.stacked() @ ops.M_a.T
    return AsymptoticModel(
        Phi=Phi, ops=ops, V=eig.eigenvectors, Gamma=np.diag(eig.eigenvalues),
        Pi_R=Pi_R, Pi_b=Pi_b, Pi_a=Pi_a, a_star=a_star, bmean_centered=Zc @ a_red,
        z_mean=z_mean, n=n, tie_report=report,
    )


def z_multiplier(level: float) -> float:
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    return float(norm.ppf((1 + level) / 2))


def sigma_mu_ci(model: FittedBScaling, asy: AsymptoticModel, w_new, level: float = 0.95) -> PredictionCI:
    """Wald interval for the B-mean at one new observation."""
    w = np.asarray(w_new, dtype=float).reshape(1, -1)
    if w.shape[1] != model.K:
        raise DimensionMismatch(f"expected {model.K} values, got {w.shape[1]}")
    g = np.hstack(reduced_designs(model, w))[0] / model.K - asy.z_mean
    mu_hat = float(g @ model.a_reduced())
    psi = asy.a_star @ g - asy.bmean_centered
    s2 = float(np.mean(psi**2))
    if s2 < -1e-10:
        raise NegativeVariance(f"sigma_mu^2 = {s2:.3e}")
    s = np.sqrt(max(s2, 0.0))
    half = z_multiplier(level) * s / np.sqrt(asy.n)
    return PredictionCI(mu_hat, float(s), level, mu_hat - half, mu_hat + half, asy.n)


def coefficient_only_variance(model: FittedBScaling, asy: AsymptoticModel, w_new) -> float:
    """``g^T Pi_a g`` with ``g`` the centered stacked basis at ``w_new`` over K.

    The centering-constant term is left out; this is the plain sandwich form.
    """
    w = np.asarray(w_new, dtype=float).reshape(1, -1)
    g = np.hstack(reduced_designs(model, w))[0] / model.K - asy.z_mean
    return float(g @ asy.Pi_a @ g)
