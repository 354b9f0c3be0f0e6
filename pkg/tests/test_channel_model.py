"""Channel statistics: one-ring covariances, Doppler coefficient, eigensystem,
DFT surrogate basis, and AR(1) realizations."""

import numpy as np
import pytest
import scipy.special
from hypothesis import given, settings
from hypothesis import strategies as st

from pilotseq import channel_model as cm


def default_ring(**kw):
    base = dict(d_s=100.0, d_r=30.0, h=60.0, d_0=30.0, alpha_0=3.8,
                theta_h=np.pi / 6, f_c=2.5e9, t_s=100e-6, v=3 / 3.6)
    base.update(kw)
    return cm.OneRingGeometry(**base)


class TestPathLoss:
    def test_reference_distance_halves_power(self):
        assert cm.path_loss(default_ring(d_s=30.0, d_r=10.0)) == pytest.approx(0.5, abs=1e-15)

    def test_frozen_value(self):
        # (1 + (100/30)**3.8)**-1 evaluated at 30 decimal digits
        assert cm.path_loss(default_ring()) == pytest.approx(0.010200187037321906, abs=1e-15)

    def test_vanishes_monotonically_with_distance(self):
        gains = [cm.path_loss(default_ring(d_s=d)) for d in (50, 100, 400, 1600, 25600)]
        assert all(a > b for a, b in zip(gains, gains[1:]))
        assert gains[-1] < 1e-9


class TestOneRingParams:
    def test_frozen_angles(self):
        dv, tv, dh = cm.one_ring_params(default_ring())
        assert dv == pytest.approx(0.13810924827856622, abs=1e-15)
        assert tv == pytest.approx(1.0002793029457926, abs=1e-15)
        assert dh == pytest.approx(0.29145679447786709, abs=1e-15)

    def test_angle_spread_matches_figure_caption(self):
        _, _, dh = cm.one_ring_params(default_ring())
        assert np.degrees(dh) == pytest.approx(16.7, abs=0.05)

    def test_zero_ring_radius_collapses_spreads(self):
        dv, _, dh = cm.one_ring_params(default_ring(d_r=1e-12))
        assert abs(dv) < 1e-13 and abs(dh) < 1e-13


class TestOneRingCovariance:
    def test_diagonal_equals_gamma(self):
        r = cm.one_ring_covariance(6, theta=0.3, delta=0.2, gamma=0.7)
        assert np.allclose(np.diag(r), 0.7, atol=1e-12)
        assert np.real(np.trace(r)) == pytest.approx(6 * 0.7, abs=1e-9)

    def test_degenerate_spread_is_steering_outer_product(self):
        theta = 0.4
        r = cm.one_ring_covariance(5, theta=theta, delta=0.0, gamma=0.9)
        steer = np.exp(-1j * np.pi * np.arange(5) * np.sin(theta))
        expected = 0.9 * np.outer(steer, steer.conj())
        assert np.allclose(r, expected, atol=1e-14)
        assert np.linalg.matrix_rank(r, tol=1e-9) == 1

    def test_against_brute_force_trapezoid(self):
        # 1e6-panel trapezoid as the independent quadrature oracle
        n, theta, delta, gamma = 4, 0.0, 0.1, 1.0
        r = cm.one_ring_covariance(n, theta, delta, gamma)
        xs = np.linspace(theta - delta, theta + delta, 1_000_001)
        for k in range(n):
            vals = np.exp(-1j * np.pi * k * np.sin(xs))
            oracle = gamma / (2 * delta) * np.trapezoid(vals, xs)
            assert abs(r[k, 0] - oracle) < 1e-10

    def test_toeplitz_hermitian_psd(self):
        r = cm.one_ring_covariance(12, theta=0.5, delta=0.15, gamma=0.4)
        for k in range(1, 12):
            diag = np.diagonal(r, -k)
            assert np.allclose(diag, diag[0], atol=1e-12)
        assert np.allclose(r, r.conj().T, atol=1e-13)
        evals = np.linalg.eigvalsh(r)
        assert evals.min() > -1e-10 * evals.max()

    def test_panel_budget_reported(self):
        with pytest.raises(cm.QuadratureError):
            cm.one_ring_covariance(16, theta=0.0, delta=0.3, gamma=1.0, max_panels=16)


class TestUpaCovariance:
    def test_identity_kronecker(self):
        out = cm.upa_covariance(np.eye(2), np.eye(3))
        assert np.allclose(out, np.eye(6))

    def test_hand_expanded_blocks(self):
        rh = np.array([[2.0, 1j], [-1j, 1.0]])
        rv = np.array([[1.0, 0.5], [0.5, 3.0]])
        out = cm.upa_covariance(rh, rv)
        assert out.shape == (4, 4)
        assert np.allclose(out[:2, :2], 2.0 * rv)
        assert np.allclose(out[:2, 2:], 1j * rv)
        assert np.allclose(out[2:, :2], -1j * rv)
        assert np.allclose(out[2:, 2:], 1.0 * rv)
        assert np.real(np.trace(out)) == pytest.approx(3.0 * 4.0)

    def test_spectrum_is_pairwise_products(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        y = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        rh = x @ x.conj().T
        rv = y @ y.conj().T
        got = np.sort(np.linalg.eigvalsh(cm.upa_covariance(rh, rv)))
        expected = np.sort(np.outer(np.linalg.eigvalsh(rh), np.linalg.eigvalsh(rv)).ravel())
        assert np.allclose(got, expected, rtol=1e-10)


class TestTemporalCoefficient:
    def test_static_user_is_one(self):
        assert cm.temporal_coefficient(default_ring(v=0.0), 5) == 1.0

    def test_frozen_jakes_value(self):
        # J0(2*pi * (3/3.6 * 2.5e9 / c) * 1e-4 * 5) at 30 digits
        a = cm.temporal_coefficient(default_ring(), 5)
        assert a == pytest.approx(0.99988084756109957, abs=1e-14)

    def test_decreasing_in_block_length_and_speed(self):
        a5 = cm.temporal_coefficient(default_ring(), 5)
        a10 = cm.temporal_coefficient(default_ring(), 10)
        fast = cm.temporal_coefficient(default_ring(v=30 / 3.6), 5)
        assert a10 < a5
        assert fast < a5

    def test_excessive_mobility_rejected(self):
        with pytest.raises(ValueError, match="mobility"):
            cm.temporal_coefficient(default_ring(v=500.0), 400)

    @given(st.floats(min_value=0.0, max_value=4.9))
    @settings(max_examples=60, deadline=None)
    def test_series_matches_scipy(self, x):
        assert cm.bessel_j0(x) == pytest.approx(float(scipy.special.j0(x)), abs=5e-14)


class TestEigendecompose:
    def test_identity_full_rank(self):
        u, lam, r = cm.eigendecompose(np.eye(5), 1e-6)
        assert r == 5
        assert np.allclose(lam, 1.0)
        assert np.allclose(u.conj().T @ u, np.eye(5), atol=1e-12)

    def test_rank_one(self):
        s = np.array([1.0, 1j, -1.0, -1j]) / 2.0
        r_h = 0.8 * np.outer(s, s.conj())
        u, lam, r = cm.eigendecompose(r_h, 1e-6)
        assert r == 1
        assert lam[0] == pytest.approx(0.8 * np.linalg.norm(s) ** 2, rel=1e-12)

    def test_zero_matrix_rejected(self):
        with pytest.raises(ValueError, match="rank 0"):
            cm.eigendecompose(np.zeros((4, 4)), 1e-6)

    def test_one_ring_truncation_residual(self):
        r_h = cm.one_ring_covariance(32, theta=0.2, delta=np.radians(4.6), gamma=1.0)
        u, lam, r = cm.eigendecompose(r_h, 1e-6)
        assert r < 32  # narrow spread compresses the rank
        resid = np.linalg.norm(r_h - (u * lam) @ u.conj().T)
        assert resid < 1e-6 * np.real(np.trace(r_h))
        assert np.all(np.diff(lam) <= 1e-15)


class TestDftApproximation:
    def test_identity_covariance(self):
        basis = cm.dft_approximation(np.eye(8), 3)
        assert np.allclose(basis.lambda_tilde, 1.0, atol=1e-12)
        assert len(set(basis.column_indices)) == 3

    def test_exact_dft_eigenvector(self):
        n = 8
        f3 = np.exp(-2j * np.pi * 3 * np.arange(n) / n) / np.sqrt(n)
        r_h = n * np.outer(f3, f3.conj())
        basis = cm.dft_approximation(r_h, 1)
        assert basis.column_indices == (3,)
        assert basis.lambda_tilde[0] == pytest.approx(n, rel=1e-12)

    def test_columns_orthonormal(self):
        r_h = cm.one_ring_covariance(16, 0.3, 0.2, 1.0)
        basis = cm.dft_approximation(r_h, 6)
        gram = basis.f_tilde.conj().T @ basis.f_tilde
        assert np.allclose(gram, np.eye(6), atol=1e-12)

    def test_residual_nonincreasing_in_rank(self):
        r_h = cm.one_ring_covariance(24, 0.3, 0.25, 1.0)
        resid = []
        for r_target in (2, 4, 8, 16, 24):
            b = cm.dft_approximation(r_h, r_target)
            approx = (b.f_tilde * b.lambda_tilde) @ b.f_tilde.conj().T
            resid.append(np.linalg.norm(r_h - approx))
        assert all(x >= y - 1e-12 for x, y in zip(resid, resid[1:]))

    def test_asymptotic_improvement_with_array_size(self):
        # Toeplitz eigenbasis approaches the DFT as the aperture grows
        def rel_residual(n):
            r_h = cm.one_ring_covariance(n, 0.2, np.radians(10.0), 1.0)
            b = cm.dft_approximation(r_h, max(1, n // 4))
            approx = (b.f_tilde * b.lambda_tilde) @ b.f_tilde.conj().T
            return np.linalg.norm(r_h - approx) / np.linalg.norm(r_h)

        assert rel_residual(128) < rel_residual(32)

    def test_rank_too_large_rejected(self):
        with pytest.raises(ValueError):
            cm.dft_approximation(np.eye(4), 5)

    def test_upa_combination_matches_direct_projection(self):
        rng = np.random.default_rng(3)
        rh = cm.one_ring_covariance(5, 0.4, 0.2, 0.7)
        rv = cm.one_ring_covariance(3, 0.9, 0.1, 1.0)
        basis = cm.dft_approximation_upa(rh, rv, 6)
        big = np.kron(rh, rv)
        for idx in range(6):
            col = basis.f_tilde[:, idx]
            assert np.linalg.norm(col) == pytest.approx(1.0, rel=1e-12)
            direct = np.real(col.conj() @ big @ col)
            assert direct == pytest.approx(basis.lambda_tilde[idx], rel=1e-10)
        assert np.all(np.diff(basis.lambda_tilde) <= 1e-12)


class TestChannelEvolution:
    def make_stats(self, a=0.95, n=6):
        r_h = cm.one_ring_covariance(n, 0.25, 0.3, 1.0)
        return cm.ChannelStatistics.from_covariance(a, r_h)

    def test_static_channel_untouched(self):
        stats = self.make_stats(a=1.0)
        rng = np.random.default_rng(0)
        h = cm.stationary_channel(stats, rng)
        assert np.allclose(cm.evolve_channel(h, stats, rng), h)

    def test_memoryless_limit_draws_fresh(self):
        # a -> 0 keeps none of the previous state
        r_h = np.eye(4)
        stats = cm.ChannelStatistics.from_covariance(1e-12, r_h)
        rng = np.random.default_rng(1)
        h = 1e6 * np.ones(4, dtype=complex)
        out = cm.evolve_channel(h, stats, rng)
        assert np.max(np.abs(out)) < 100.0

    def test_stationary_covariance_preserved(self):
        stats = self.make_stats(a=0.9)
        rng = np.random.default_rng(2)
        draws = 100_000
        h = np.stack([cm.stationary_channel(stats, rng) for _ in range(64)])
        # vectorized AR(1) evolution of 64 parallel chains, pooled over time
        acc = np.zeros((stats.n_t, stats.n_t), dtype=complex)
        count = 0
        scale = np.sqrt(1 - stats.a**2)
        root = stats.u * np.sqrt(stats.lam)
        for _ in range(draws // 64):
            b = cm.complex_normal(rng, (64, stats.rank))
            h = stats.a * h + scale * (b @ root.T)
            acc += h.T @ h.conj()
            count += 64
        emp = acc / count
        rel = np.linalg.norm(emp - stats.r_h) / np.linalg.norm(stats.r_h)
        assert rel < 0.03

    def test_block_autocorrelation_decays_geometrically(self):
        stats = self.make_stats(a=0.8)
        rng = np.random.default_rng(3)
        chains = 4096
        h0 = np.stack([cm.stationary_channel(stats, rng) for _ in range(chains)])
        h = h0.copy()
        scale = np.sqrt(1 - stats.a**2)
        root = stats.u * np.sqrt(stats.lam)
        for k in (1, 2, 3):
            b = cm.complex_normal(rng, (chains, stats.rank))
            h = stats.a * h + scale * (b @ root.T)
            cross = (h.T @ h0.conj()) / chains
            expected = stats.a**k * stats.r_h
            rel = np.linalg.norm(cross - expected) / np.linalg.norm(stats.r_h)
            assert rel < 0.1


class TestGeometryValidation:
    def test_upa_count_must_factor(self):
        with pytest.raises(ValueError):
            cm.ArrayGeometry("upa", 10, 3, 5)

    def test_ring_ordering_enforced(self):
        with pytest.raises(ValueError):
            default_ring(d_s=10.0, d_r=30.0)

    def test_sector_bound_enforced(self):
        with pytest.raises(ValueError):
            default_ring(theta_h=1.2)

    def test_build_statistics_trace(self):
        arr = cm.ArrayGeometry.upa(3, 5)
        ring = default_ring()
        stats = cm.build_statistics(arr, ring, block_len=5)
        gamma = cm.path_loss(ring)
        assert stats.trace() == pytest.approx(15 * gamma, rel=1e-9)
        assert stats.n_t == 15
