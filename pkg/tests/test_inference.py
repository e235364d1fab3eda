import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bscaling import inference, numerics
from bscaling.core import FusionInput, contrast_basis, fit_bscaling, predict_bmean
from bscaling.errors import DimensionMismatch, MemoryBudget, SingularMatrix
from bscaling.spline_basis import KnotSet, basis_design

from conftest import linear_world, noisy_world


def quiet_fit(data, *args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return fit_bscaling(FusionInput(data), *args, **kw)


def weighted_functionals(designs, weights):
    """Sigma and centered Lambda of a weighted empirical distribution, built from N_i."""
    K = len(designs)
    n = designs[0].shape[0]
    sizes = [D.shape[1] for D in designs]
    p = sum(sizes)
    Q = np.eye(K) - 1.0 / K
    Ns = np.zeros((n, p, K))
    o = 0
    for k, D in enumerate(designs):
        Ns[:, o:o + sizes[k], k] = D
        o += sizes[k]
    Nbar = np.einsum("i,ipk->pk", weights, Ns)
    Lam = np.zeros((p, p))
    Sig = np.zeros((p, p))
    zbar = Nbar.sum(axis=1) / K
    for i in range(n):
        C = Ns[i] - Nbar
        Lam += weights[i] * C @ Q @ C.T
        z = Ns[i].sum(axis=1) / K - zbar
        Sig += weights[i] * np.outer(z, z)
    return Sig, Lam


def toy_designs(seed, n=5):
    g = np.random.default_rng(seed)
    ks = KnotSet(2, (0.0, 0.5, 1.0))  # three hat functions, two contrast directions
    return [basis_design(ks, g.uniform(size=n)) @ contrast_basis(3) for _ in range(2)]


class TestInfluenceSamples:
    def test_mean_zero_and_consistency(self, rng):
        designs = toy_designs(1, n=50)
        s = inference.influence_from_designs(designs)
        np.testing.assert_allclose(s.sigma_star.mean(axis=0), 0, atol=1e-10)
        np.testing.assert_allclose(s.lambda_star.mean(axis=0), 0, atol=1e-10)
        assert s.dim == 4
        assert s.stacked().shape == (50, 32)

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_gateaux_derivative(self, seed):
        # influence at row i = d/de T((1-e) F_n + e delta_i) at e = 0, central differences
        designs = toy_designs(seed)
        n = 5
        s = inference.influence_from_designs(designs)
        eps = 1e-6
        base = np.full(n, 1.0 / n)
        for i in range(n):
            delta = np.zeros(n)
            delta[i] = 1.0
            hi = weighted_functionals(designs, (1 - eps) * base + eps * delta)
            lo = weighted_functionals(designs, (1 + eps) * base - eps * delta)
            dS = (hi[0] - lo[0]) / (2 * eps)
            dL = (hi[1] - lo[1]) / (2 * eps)
            np.testing.assert_allclose(s.sigma_star[i], numerics.vec(dS), atol=1e-7)
            np.testing.assert_allclose(s.lambda_star[i], numerics.vec(dL), atol=1e-7)

    def test_sigma_star_formula(self):
        # z z' - E zz' - (z - zbar) zbar' - zbar (z - zbar)'
        designs = toy_designs(4)
        Z = np.hstack(designs) / 2
        zbar = Z.mean(axis=0)
        Ezz = Z.T @ Z / len(Z)
        s = inference.influence_from_designs(designs)
        for i, z in enumerate(Z):
            expect = np.outer(z, z) - Ezz - np.outer(z - zbar, zbar) - np.outer(zbar, z - zbar)
            np.testing.assert_allclose(s.sigma_star[i], numerics.vec(expect), atol=1e-14)

    def test_model_route_matches_designs(self):
        _, W = noisy_world(n=300, K=3)
        fit = quiet_fit(W, k0=3)
        a = inference.influence_samples(fit, FusionInput(W))
        b = inference.influence_from_designs(inference.reduced_designs(fit, W))
        np.testing.assert_array_equal(a.sigma_star, b.sigma_star)


class TestPhi:
    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_symmetric_psd(self, seed):
        Phi = inference.estimate_phi(inference.influence_from_designs(toy_designs(seed, n=30)))
        np.testing.assert_allclose(Phi, Phi.T, atol=1e-12)
        assert np.linalg.eigvalsh(Phi).min() >= -1e-8 * max(np.abs(Phi).max(), 1e-300)

    def test_blocks_brute_force(self):
        s = inference.influence_from_designs(toy_designs(2, n=20))
        Phi = inference.estimate_phi(s)
        r2 = s.dim**2
        Phi11 = sum(np.outer(v, v) for v in s.sigma_star) / 20
        Phi21 = sum(np.outer(l, v) for l, v in zip(s.lambda_star, s.sigma_star)) / 20
        np.testing.assert_allclose(Phi[:r2, :r2], Phi11, atol=1e-15)
        np.testing.assert_allclose(Phi[r2:, :r2], Phi21, atol=1e-15)
        np.testing.assert_allclose(Phi[:r2, r2:], Phi21.T, atol=1e-15)

    def test_scaling(self):
        s = inference.influence_from_designs(toy_designs(3, n=20))
        c = 3.5
        scaled = inference.InfluenceSamples(c * s.sigma_star, c * s.lambda_star)
        np.testing.assert_allclose(inference.estimate_phi(scaled), c**2 * inference.estimate_phi(s), rtol=1e-12)

    def test_guard(self):
        s = inference.influence_from_designs(toy_designs(3, n=20))
        with pytest.raises(MemoryBudget):
            inference.estimate_phi(s, max_dim=3)
        inference.estimate_phi(s, max_dim=None)


def spd_pair(seed, r=3):
    g = np.random.default_rng(seed)
    A = g.normal(size=(r, r))
    B = g.normal(size=(r, r))
    return A @ A.T + r * np.eye(r), B @ B.T


def R_of(S, L):
    Sih = numerics.inv_sqrt_psd(S)
    return Sih @ L @ Sih


def smallest_pair(S, L, ref_b):
    e = numerics.sym_eig(R_of(S, L))
    b = e.eigenvectors[:, -1]
    b = b * np.sign(b @ ref_b)
    return b, numerics.inv_sqrt_psd(S) @ b


class TestOperators:
    def test_identity_sigma(self):
        _, L = spd_pair(0)
        e = numerics.sym_eig(L)
        ops = inference.asymptotic_operators(L, np.eye(3), e.eigenvectors[:, -1], e)
        I = np.eye(3)
        np.testing.assert_allclose(ops.kron_inv, np.eye(9) / 2, atol=1e-14)
        np.testing.assert_allclose(ops.Omega1, -(np.kron(L, I) + np.kron(I, L)) / 2, atol=1e-12)

    def test_omega2(self):
        S, L = spd_pair(1)
        ops = inference.asymptotic_operators(L, S, np.ones(3) / np.sqrt(3))
        M = numerics.inv_sqrt_psd(S)
        np.testing.assert_allclose(ops.Omega2, np.kron(M, M), atol=1e-14)

    @pytest.mark.parametrize("seed", range(5))
    def test_finite_differences(self, seed):
        S, L = spd_pair(seed)
        g = np.random.default_rng(100 + seed)
        dS = g.normal(size=(3, 3))
        dS = dS + dS.T
        dL = g.normal(size=(3, 3))
        dL = dL + dL.T
        e = numerics.sym_eig(R_of(S, L))
        b0 = e.eigenvectors[:, -1]
        ops = inference.asymptotic_operators(L, S, b0, e)
        eps = 1e-6
        vS, vL = numerics.vec(dS), numerics.vec(dL)

        dR = (R_of(S + eps * dS, L) - R_of(S - eps * dS, L)) / (2 * eps)
        np.testing.assert_allclose(ops.Omega1 @ vS, numerics.vec(dR), rtol=1e-3, atol=1e-8)
        dR = (R_of(S, L + eps * dL) - R_of(S, L - eps * dL)) / (2 * eps)
        np.testing.assert_allclose(ops.Omega2 @ vL, numerics.vec(dR), rtol=1e-3, atol=1e-8)

        hi = smallest_pair(S + eps * dS, L + eps * dL, b0)
        lo = smallest_pair(S - eps * dS, L - eps * dL, b0)
        db = (hi[0] - lo[0]) / (2 * eps)
        da = (hi[1] - lo[1]) / (2 * eps)
        np.testing.assert_allclose(ops.M_b1 @ vS + ops.M_b2 @ vL, db, rtol=1e-3, atol=1e-7)
        np.testing.assert_allclose(ops.M_a1 @ vS + ops.M_a2 @ vL, da, rtol=1e-3, atol=1e-7)

    def test_eigenvector_signs_irrelevant(self):
        S, L = spd_pair(7)
        e = numerics.sym_eig(R_of(S, L))
        flipped = numerics.EigenDecomp(e.eigenvalues, e.eigenvectors * np.array([-1, 1, -1]))
        b = e.eigenvectors[:, -1]
        a = inference.asymptotic_operators(L, S, b, e)
        c = inference.asymptotic_operators(L, S, b, flipped)
        np.testing.assert_allclose(a.M_b, c.M_b, atol=1e-12)

    def test_ill_conditioned(self):
        with pytest.raises(SingularMatrix):
            inference.asymptotic_operators(np.eye(2), np.diag([1.0, 1e-12]), np.array([0.0, 1.0]))


class TestCovariances:
    def test_zero_phi(self):
        S, L = spd_pair(2)
        ops = inference.asymptotic_operators(L, S, np.ones(3) / np.sqrt(3))
        for P in inference.covariances(ops, np.zeros((18, 18))):
            assert not P.any()

    def test_dimension_mismatch(self):
        S, L = spd_pair(2)
        ops = inference.asymptotic_operators(L, S, np.ones(3) / np.sqrt(3))
        with pytest.raises(DimensionMismatch):
            inference.covariances(ops, np.eye(10))

    @pytest.mark.parametrize("seed", range(3))
    def test_model_objects_psd(self, seed):
        _, W = noisy_world(n=500, K=3, seed=seed)
        fit = quiet_fit(W, k0=3)
        asy = inference.asymptotic_model(fit, FusionInput(W))
        for P in (asy.Phi, asy.Pi_R, asy.Pi_b, asy.Pi_a):
            np.testing.assert_allclose(P, P.T, atol=1e-10 * max(np.abs(P).max(), 1))
            assert np.linalg.eigvalsh(P).min() >= -1e-8 * np.abs(P).max()
        np.testing.assert_allclose(asy.Phi12, asy.Phi21.T, atol=1e-10)
        r = fit.a_reduced().size
        assert asy.Phi11.shape == asy.Phi22.shape == (r * r, r * r)

    def test_pi_R_monte_carlo(self):
        # sampling covariance of sqrt(n) vec(R_n) over 300 replications against the
        # plug-in Pi_R of a 200000-row sample (K=2, l=4, n=2000, fixed spline spaces)
        ks = KnotSet(4, (0.0, 1.0))

        def draw(n, g):
            y = g.uniform(size=n)
            u1 = (np.clip(y + g.normal(0, 0.2, n), -1, 2) + 1) / 3
            u2 = np.clip(np.exp(y + g.normal(0, 0.2, n)), 0, 10) / 10
            return [basis_design(ks, u) @ contrast_basis(4) for u in (u1, u2)]

        def moments(designs):
            oz, ox, _ = inference._centered_moments(designs)
            return oz.mean(axis=0), ox.mean(axis=0)

        n = 2000
        g = np.random.default_rng(7)
        Rs = np.array([numerics.vec(R_of(*moments(draw(n, g)))) for _ in range(300)])
        emp = n * np.cov(Rs.T, bias=True)
        big = draw(200_000, np.random.default_rng(99))
        S, L = moments(big)
        e = numerics.sym_eig(R_of(S, L))
        ops = inference.asymptotic_operators(L, S, e.eigenvectors[:, -1], e)
        Phi = inference.estimate_phi(inference.influence_from_designs(big), None)
        Pi_R = inference.covariances(ops, Phi)[0]
        dominant = np.abs(Pi_R) >= 0.25 * np.abs(Pi_R).max()
        rel = np.abs(emp - Pi_R)[dominant] / np.abs(Pi_R)[dominant]
        assert rel.max() <= 0.25


class TestPrediction:
    def test_z_multiplier(self):
        assert inference.z_multiplier(0.95) == pytest.approx(1.959964, abs=1e-6)
        with pytest.raises(ValueError):
            inference.z_multiplier(1.0)

    @pytest.mark.parametrize("seed", range(3))
    def test_interval(self, seed):
        _, W = noisy_world(n=600, K=3, seed=seed)
        fit = quiet_fit(W, k0=3)
        asy = inference.asymptotic_model(fit, FusionInput(W))
        for w in W[:5]:
            ci = inference.sigma_mu_ci(fit, asy, w, 0.9)
            assert ci.mu_hat == pytest.approx(predict_bmean(fit, w)[0], abs=1e-10)
            assert ci.sigma_mu >= 0
            assert ci.lower <= ci.mu_hat <= ci.upper
            z = inference.z_multiplier(0.9)
            assert ci.width == pytest.approx(2 * z * ci.sigma_mu / np.sqrt(600), rel=1e-12)
            assert inference.coefficient_only_variance(fit, asy, w) >= -1e-12

    def test_wrong_width(self):
        _, W = noisy_world(n=300, K=3)
        fit = quiet_fit(W, k0=3)
        asy = inference.asymptotic_model(fit, FusionInput(W))
        with pytest.raises(DimensionMismatch):
            inference.sigma_mu_ci(fit, asy, W[0, :2])

    def test_refuses_ridged_fit(self):
        _, W = linear_world(n=300, K=3)
        fit = quiet_fit(W, k0=3)
        assert fit.ridge_applied > 0
        with pytest.raises(SingularMatrix):
            inference.asymptotic_model(fit, FusionInput(W))

    def test_dimension_guard(self):
        _, W = noisy_world(n=600, K=4)
        fit = quiet_fit(W, k0=11)
        with pytest.raises(MemoryBudget):
            inference.asymptotic_model(fit, FusionInput(W))
