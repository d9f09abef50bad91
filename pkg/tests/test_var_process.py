import numpy as np
import pytest

from tarnet.tensor_core import frobenius_norm, tucker_ranks
from tarnet.var_process import (
    GenerationDivergedError,
    NoiseSpec,
    NonStationaryError,
    SpectralSummary,
    VarWeights,
    companion_matrix,
    dependence_constant,
    generate_l_dgp,
    generate_low_tucker_weights,
    generate_nl_dgp,
    is_stationary,
    rescale_to_stationary,
    simulate_var,
    spectral_mu,
    spectral_radius,
    spectral_summary,
)


def scalar(*coefs):
    return VarWeights.from_lags(*[np.array([[c]]) for c in coefs])


def det_poly_roots(w):
    """Roots of det(I - sum_k A_k z^k), via DFT interpolation of the determinant."""
    deg = w.n * w.p
    m = deg + 1
    z = np.exp(2j * np.pi * np.arange(m) / m)
    vals = [np.linalg.det(np.eye(w.n) - sum(w.w[:, :, k] * zz ** (k + 1) for k in range(w.p))) for zz in z]
    coefs = np.fft.fft(vals) / m  # coefs[j] multiplies z^j
    coefs = np.real_if_close(coefs, tol=1e6).real
    return np.roots(coefs[::-1])


class TestCompanion:
    def test_scalar_ar1(self):
        np.testing.assert_array_equal(companion_matrix(scalar(0.5)), [[0.5]])

    def test_scalar_ar2(self):
        np.testing.assert_array_equal(companion_matrix(scalar(0.3, -0.2)), [[0.3, -0.2], [1.0, 0.0]])

    def test_zero_weights(self):
        w = VarWeights(np.zeros((2, 2, 3)))
        comp = companion_matrix(w)
        expected = np.zeros((6, 6))
        expected[2:, :4] = np.eye(4)
        np.testing.assert_array_equal(comp, expected)
        assert spectral_radius(w) == 0.0


class TestStationarity:
    def test_scalar_cases(self):
        assert is_stationary(scalar(0.5))
        assert not is_stationary(scalar(1.1))

    def test_after_rescale(self):
        w = VarWeights(np.random.default_rng(0).standard_normal((3, 3, 2)))
        assert is_stationary(rescale_to_stationary(w, 0.9), 0.0)

    def test_margin(self):
        assert is_stationary(scalar(0.5), 0.4)
        assert not is_stationary(scalar(0.5), 0.6)
        with pytest.raises(ValueError):
            is_stationary(scalar(0.5), 1.0)

    def test_agrees_with_determinant_roots(self):
        rng = np.random.default_rng(1)
        checked = 0
        while checked < 100:
            n, p = rng.integers(1, 3, endpoint=True), rng.integers(1, 3, endpoint=True)
            w = VarWeights(rng.standard_normal((n, n, p)) * rng.uniform(0.1, 0.8))
            rho = spectral_radius(w)
            if abs(rho - 1.0) < 1e-3:
                continue
            roots = det_poly_roots(w)
            assert is_stationary(w) == bool(np.all(np.abs(roots) > 1.0))
            checked += 1


class TestRescale:
    def test_scalar(self):
        out = rescale_to_stationary(scalar(2.0), 0.9)
        assert out.w[0, 0, 0] == pytest.approx(0.9, abs=1e-6)

    def test_scales_up(self):
        rng = np.random.default_rng(2)
        w = rescale_to_stationary(VarWeights(rng.standard_normal((3, 3, 2))), 0.45)
        assert spectral_radius(w) == pytest.approx(0.45, abs=1e-6)
        up = rescale_to_stationary(w, 0.9)
        assert abs(np.max(np.abs(np.linalg.eigvals(companion_matrix(up)))) - 0.9) < 1e-6
        ratio = up.w / w.w
        np.testing.assert_allclose(ratio, ratio.flat[0], rtol=1e-12)
        assert ratio.flat[0] > 1

    def test_preserves_tucker_ranks(self):
        w = generate_low_tucker_weights(6, 3, (2, 3, 2), seed=3)
        assert tucker_ranks(rescale_to_stationary(w, 0.5).w) == (2, 3, 2)

    def test_zero_rejected(self):
        with pytest.raises(ValueError):
            rescale_to_stationary(VarWeights(np.zeros((2, 2, 2))), 0.9)


class TestSpectralMu:
    def test_zero_weights(self):
        mu = spectral_mu(VarWeights(np.zeros((3, 3, 2))), 128)
        assert mu.mu_min == pytest.approx(1.0) and mu.mu_max == pytest.approx(1.0)

    def test_scalar_ar1(self):
        mu = spectral_mu(scalar(0.5), 1024)
        # |1 - 0.5 e^{i theta}|^2 = 1.25 - cos(theta), extremes at theta = 0 and pi
        assert mu.mu_min == pytest.approx(0.25, abs=1e-12)
        assert mu.mu_max == pytest.approx(2.25, abs=1e-12)

    def test_grid_refinement(self):
        w = generate_low_tucker_weights(5, 3, (2, 2, 2), seed=4)
        a, b = spectral_mu(w, 512), spectral_mu(w, 1024)
        assert abs(a.mu_min - b.mu_min) < 1e-4
        assert abs(a.mu_max - b.mu_max) < 1e-4

    def test_bounds(self):
        for seed in range(10):
            mu = spectral_mu(generate_low_tucker_weights(4, 2, (2, 2, 1), seed=seed), 256)
            assert 0 < mu.mu_min <= mu.mu_max < np.inf

    def test_nonstationary_warns(self):
        with pytest.warns(RuntimeWarning):
            mu = spectral_mu(scalar(1.5), 64)
        assert not mu.stationary

    def test_grid_too_small(self):
        with pytest.raises(ValueError):
            spectral_mu(scalar(0.5), 16)


class TestDependenceConstant:
    def test_identity(self):
        assert dependence_constant(SpectralSummary(1.0, 1.0, 1024), np.eye(3)) == pytest.approx(1.0)

    def test_ar1_value(self):
        assert dependence_constant(SpectralSummary(0.25, 2.25, 1024), np.eye(1)) == pytest.approx(4.5)

    def test_scale_invariant(self):
        sigma = np.array([[2.0, 0.3], [0.3, 1.0]])
        mu = SpectralSummary(0.4, 3.0, 1024)
        assert dependence_constant(mu, 7.5 * sigma) == pytest.approx(dependence_constant(mu, sigma), rel=1e-12)

    def test_singular_rejected(self):
        with pytest.raises(ValueError):
            dependence_constant(SpectralSummary(1.0, 1.0, 1024), np.zeros((2, 2)))

    def test_summary_combines(self):
        s = spectral_summary(scalar(0.5))
        assert s.m_constant == pytest.approx(4.5, abs=1e-9)


class TestLowTuckerWeights:
    @pytest.mark.parametrize("ranks", [(2, 2, 2), (2, 2, 1), (2, 3, 3)])
    def test_ranks_and_stationarity(self, ranks):
        w = generate_low_tucker_weights(9, 3, ranks, seed=5)
        assert tucker_ranks(w.w) == ranks
        assert is_stationary(w, 0.0)
        assert spectral_radius(w) == pytest.approx(0.9, abs=1e-6)

    def test_determinism(self):
        a = generate_low_tucker_weights(9, 3, (2, 2, 2), seed=11)
        b = generate_low_tucker_weights(9, 3, (2, 2, 2), seed=11)
        c = generate_low_tucker_weights(9, 3, (2, 2, 2), seed=12)
        np.testing.assert_array_equal(a.w, b.w)
        assert frobenius_norm(a.w - c.w) > 0

    def test_rank_infeasible(self):
        with pytest.raises(ValueError):
            generate_low_tucker_weights(9, 3, (10, 2, 2), seed=0)
        with pytest.raises(ValueError):
            generate_low_tucker_weights(9, 3, (2, 2, 4), seed=0)
        with pytest.raises(ValueError):
            generate_low_tucker_weights(9, 3, (3, 2, 1), seed=0)


class TestSimulate:
    def test_white_noise_covariance(self):
        t = 10_000
        y = simulate_var(VarWeights(np.zeros((3, 3, 1))), NoiseSpec.identity(3, 0), t)
        cov = np.cov(y.T, bias=True)
        assert np.max(np.abs(cov - np.eye(3))) < 3 / np.sqrt(t)

    def test_vanishing_noise_stays_near_zero(self):
        w = generate_low_tucker_weights(4, 2, (2, 2, 2), seed=1)
        y = simulate_var(w, NoiseSpec(1e-30 * np.eye(4), 0), 200, burn_in=0)
        assert np.max(np.abs(y)) < 1e-12

    def test_ar1_autocorrelation(self):
        y = simulate_var(scalar(0.5), NoiseSpec.identity(1, 2), 10_000)[:, 0]
        y = y - y.mean()
        rho = np.dot(y[1:], y[:-1]) / np.dot(y, y)
        assert abs(rho - 0.5) < 0.05

    def test_row_count(self):
        y = simulate_var(scalar(0.2, 0.1, 0.1), NoiseSpec.identity(1, 0), 400, burn_in=7)
        assert y.shape == (403, 1)

    def test_reproducible(self):
        w = generate_low_tucker_weights(5, 3, (2, 2, 2), seed=0)
        a = simulate_var(w, NoiseSpec.identity(5, 9), 50)
        b = simulate_var(w, NoiseSpec.identity(5, 9), 50)
        np.testing.assert_array_equal(a, b)

    def test_rejects_nonstationary(self):
        with pytest.raises(NonStationaryError):
            simulate_var(scalar(1.2), NoiseSpec.identity(1, 0), 10)


class TestNoiseSpec:
    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            NoiseSpec(np.array([[1.0, 0.1], [0.0, 1.0]]))

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError):
            NoiseSpec(np.diag([1.0, -1.0]))


class TestNonlinearDgp:
    def test_determinism(self):
        a = generate_nl_dgp(6, 3, (2, 2, 2), 50, seed=4)
        b = generate_nl_dgp(6, 3, (2, 2, 2), 50, seed=4)
        np.testing.assert_array_equal(a, b)
        assert a.shape == (53, 6)

    def test_identity_gate_is_linear_dgp(self):
        lin, _ = generate_l_dgp(6, 3, (2, 2, 2), 80, seed=8)
        abl = generate_nl_dgp(6, 3, (2, 2, 2), 80, seed=8, nonlinear=False)
        np.testing.assert_allclose(abl, lin, rtol=1e-9, atol=1e-9)

    def test_gate_changes_output(self):
        a = generate_nl_dgp(6, 3, (2, 2, 2), 80, seed=8)
        b = generate_nl_dgp(6, 3, (2, 2, 2), 80, seed=8, nonlinear=False)
        assert np.max(np.abs(a - b)) > 1e-3

    def test_fuzz_finite(self):
        for seed in range(200):
            y = generate_nl_dgp(25, 3, (2, 2, 2), 500, seed=seed)
            assert np.all(np.isfinite(y))

    def test_divergence_guard(self, monkeypatch):
        import tarnet.var_process as vp

        monkeypatch.setattr(vp, "DIVERGENCE_LIMIT", 1e-3)
        with pytest.raises(GenerationDivergedError):
            vp.generate_nl_dgp(4, 2, (1, 1, 1), 10, seed=0)
