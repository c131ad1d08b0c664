"""Bayesian calibration tests: coefficient updates, moment estimate, gain stage."""

import numpy as np
import pytest

from repcal import (MmseConfig, estimate_gamma, mmse_calibrate, mom_gamma_magnitude,
                    nls_calibrate, update_a, update_b, vec, von_mises_denoise)
from repcal.preprocess import NoiseStatistics, PreprocessedSet

from _util import build_trial, complex_randn


def _oracle_pre(truth, pre):
    """Response matrix built from the true coefficients and repeater path."""
    z_true = (truth.forward_gain * truth.rx_b[:, None]
              * np.outer(truth.rep_to_b, truth.rep_to_a) * truth.tx_a[None, :])
    a_true = truth.rx_a / truth.tx_a
    b_true = truth.tx_b / truth.rx_b
    return a_true[:, None] * z_true.T * b_true[None, :]


class TestCoefficientUpdates:
    def test_oracle_inputs_preserve_phase(self):
        # exact channel/B side, vanishing uncertainty: pseudo-observation
        # equals the true coefficient, denoising keeps its phase exactly
        truth, pre = build_trial(4, 3, seed=0, noiseless=True, stats_snr_db=60.0)
        b_true = truth.tx_b / truth.rx_b
        a_true = truth.rx_a / truth.tx_a
        a_hat, v_a, flagged = update_a(pre, pre.r1, b_true, np.zeros(3))
        assert not flagged
        np.testing.assert_allclose(np.angle(a_hat), np.angle(a_true), atol=1e-9)
        assert np.all(np.abs(a_hat) < 1.0)
        assert np.all((v_a >= 0) & (v_a <= 1))

    def test_diagonal_equals_full_for_white_noise(self):
        _, pre = build_trial(5, 4, snr_db=10.0, seed=1)
        rng = np.random.default_rng(1)
        b_hat = np.exp(1j * rng.uniform(-np.pi, np.pi, 4)) * 0.9
        v_b = rng.uniform(0.0, 0.5, 4)
        a_d, v_d, _ = update_a(pre, pre.r1, b_hat, v_b, cov_mode="diagonal")
        a_f, v_f, _ = update_a(pre, pre.r1, b_hat, v_b, cov_mode="full")
        np.testing.assert_allclose(a_d, a_f, atol=1e-10)
        np.testing.assert_allclose(v_d, v_f, atol=1e-10)

    def test_full_mode_run_matches_diagonal_for_white(self):
        _, pre_d = build_trial(4, 4, snr_db=15.0, seed=2, mode="diagonal")
        _, pre_f = build_trial(4, 4, snr_db=15.0, seed=2, mode="full")
        est_d = mmse_calibrate(pre_d, MmseConfig(n_iter=10, cov_mode="diagonal"))
        est_f = mmse_calibrate(pre_f, MmseConfig(n_iter=10, cov_mode="full"))
        assert abs(est_d.gamma_hat - est_f.gamma_hat) < 1e-10
        np.testing.assert_allclose(est_d.a_hat, est_f.a_hat, atol=1e-10)
        np.testing.assert_allclose(est_d.mse_b, est_f.mse_b, atol=1e-10)

    def test_swap_symmetry(self):
        # the B update is the A update of the transposed problem
        _, pre = build_trial(5, 3, snr_db=10.0, seed=3)
        rng = np.random.default_rng(3)
        a_hat = 0.8 * np.exp(1j * rng.uniform(-np.pi, np.pi, 5))
        v_a = rng.uniform(0.0, 0.6, 5)
        mirrored = PreprocessedSet(
            r1=pre.r1.T, r2=pre.r2.T, r3=pre.r3.T, r4=pre.r4.T,
            noise=NoiseStatistics(omega_a=pre.noise.psi_a, psi_a=pre.noise.omega_a,
                                  omega_b=pre.noise.psi_b, psi_b=pre.noise.omega_b,
                                  mode=pre.noise.mode))
        for mode in ("diagonal", "full"):
            b_direct, v_direct, _ = update_b(pre, pre.r1, a_hat, v_a, cov_mode=mode)
            b_mirror, v_mirror, _ = update_a(mirrored, pre.r1.T, a_hat, v_a, cov_mode=mode)
            np.testing.assert_allclose(b_direct, b_mirror, atol=1e-12)
            np.testing.assert_allclose(v_direct, v_mirror, atol=1e-12)

    def test_update_matches_denoiser_contract(self):
        # sweep output equals the von Mises denoiser applied to the
        # completed-square pseudo-observation it implies
        _, pre = build_trial(4, 3, snr_db=5.0, seed=4)
        b_hat = np.ones(3, complex)
        v_b = np.ones(3)
        a_hat, v_a, _ = update_a(pre, pre.r1, b_hat, v_b)
        # reconstruct the pseudo-observation by brute force per coefficient
        noise = pre.noise
        nv = np.real(noise.omega_a[0, 0])
        for i in range(4):
            lin = b_hat * pre.r1[:, i]
            cov = (nv * np.eye(3)
                   + np.diag(np.full(3, np.real(noise.omega_b[0, 0])) * np.abs(b_hat) ** 2)
                   + np.diag((np.abs(pre.r1[:, i]) ** 2
                              + noise.forward_entry_var()[:, i]) * v_b))
            sol = np.linalg.solve(cov, np.stack([lin, pre.r3.T[:, i]], axis=1))
            psi = np.real(np.vdot(lin, sol[:, 0]))
            pseudo = np.vdot(lin, sol[:, 1]) / psi
            res = von_mises_denoise(pseudo, 1.0 / psi)
            assert abs(a_hat[i] - res.estimate) < 1e-10
            assert abs(v_a[i] - res.posterior_mse) < 1e-10

    def test_monotone_information_noiseless(self):
        _, pre = build_trial(4, 4, seed=5, noiseless=True, stats_snr_db=80.0)
        cfg = MmseConfig(n_iter=1)
        a_hat = np.ones(4, complex)
        b_hat = np.ones(4, complex)
        v_a = np.ones(4)
        v_b = np.ones(4)
        gap_prev = np.inf
        for _ in range(6):
            a_hat, v_a, _ = update_a(pre, pre.r1, b_hat, v_b, a_prev=a_hat, v_a_prev=v_a)
            b_hat, v_b, _ = update_b(pre, pre.r1, a_hat, v_a, b_prev=b_hat, v_b_prev=v_b)
            gap = float(np.max(1.0 - np.abs(a_hat)))
            assert gap <= gap_prev * (1 + 1e-9)
            gap_prev = gap

    def test_damping_blends_iterates(self):
        _, pre = build_trial(3, 3, snr_db=10.0, seed=6)
        b_hat = np.ones(3, complex)
        v_b = np.ones(3)
        full_step, v_full, _ = update_a(pre, pre.r1, b_hat, v_b)
        half_step, v_half, _ = update_a(pre, pre.r1, b_hat, v_b, damping=0.5)
        prev = np.ones(3, complex)
        np.testing.assert_allclose(half_step, 0.5 * full_step + 0.5 * prev, atol=1e-12)
        np.testing.assert_allclose(v_half, 0.5 * v_full + 0.5 * np.ones(3), atol=1e-12)


class TestMomentEstimate:
    def test_noiseless_limit(self):
        truth, pre = build_trial(4, 3, seed=7, noiseless=True, stats_snr_db=80.0)
        d = _oracle_pre(truth, pre)
        sigma = np.full(12, 1e-8 / 2.0)
        got = mom_gamma_magnitude(pre.r4, vec(d), sigma, np.zeros(12))
        assert abs(got - abs(truth.gain_ratio) ** 2) < 1e-6

    def test_deep_noise_clamps_to_zero(self):
        rng = np.random.default_rng(8)
        d = vec(complex_randn(rng, 3, 3)) * 1e-3
        r4 = np.zeros((3, 3), dtype=complex)
        out = mom_gamma_magnitude(r4, d, np.full(9, 0.5), np.zeros(9))
        assert out == 0.0

    def test_diagonal_and_dense_paths_agree(self):
        rng = np.random.default_rng(9)
        d = vec(complex_randn(rng, 3, 4))
        r4 = complex_randn(rng, 3, 4)
        v_diag = rng.uniform(0.0, 0.3, 12)
        sigma_diag = np.full(12, 0.7)
        got_diag = mom_gamma_magnitude(r4, d, sigma_diag, v_diag)
        got_full = mom_gamma_magnitude(r4, d, 0.7 * np.eye(12), v_diag)
        assert got_diag == pytest.approx(got_full, rel=1e-12)

    def test_consistency_light(self):
        # oracle response, 2000 trials at 20 dB: mean within a few percent
        vals = []
        for t in range(2000):
            truth, pre = build_trial(8, 8, snr_db=20.0, seed=1000 + t)
            d = _oracle_pre(truth, pre)
            sigma = vec(np.outer(np.real(np.diag(pre.noise.omega_a)),
                                 np.real(np.diag(pre.noise.psi_a))))
            vals.append(mom_gamma_magnitude(pre.r4, vec(d), sigma, np.zeros(64)))
        assert abs(np.mean(vals) - 1.0) < 0.05

    def test_zero_response_rejected(self):
        from repcal import CalibrationError
        with pytest.raises(CalibrationError):
            mom_gamma_magnitude(np.ones((2, 2), complex), np.zeros(4),
                                np.ones(4), np.zeros(4))


class TestGammaStage:
    def test_oracle_inputs_recover_phase_exactly(self):
        truth, pre = build_trial(4, 3, seed=10, noiseless=True, stats_snr_db=120.0)
        z_true = (truth.forward_gain * truth.rx_b[:, None]
                  * np.outer(truth.rep_to_b, truth.rep_to_a) * truth.tx_a[None, :])
        a_true = truth.rx_a / truth.tx_a
        b_true = truth.tx_b / truth.rx_b
        cfg = MmseConfig(phi_gamma_mode=1.0)
        gamma_hat, v_gamma, flags = estimate_gamma(pre, z_true, a_true, np.zeros(4),
                                                   b_true, np.zeros(3), cfg)
        assert not flags
        assert np.angle(gamma_hat) == pytest.approx(np.angle(truth.gain_ratio), abs=1e-9)
        assert abs(gamma_hat - truth.gain_ratio) < 1e-4
        assert v_gamma < 1e-8

    def test_known_radius_bounds_magnitude(self):
        _, pre = build_trial(4, 3, snr_db=10.0, seed=11)
        est_nls = nls_calibrate(pre, n_iter=10)
        cfg = MmseConfig(phi_gamma_mode=1.0)
        gamma_hat, _, _ = estimate_gamma(pre, est_nls.z_hat, est_nls.a_hat,
                                         0.1 * np.ones(4), est_nls.b_hat,
                                         0.1 * np.ones(3), cfg)
        assert abs(gamma_hat) < 1.0

    def test_paired_ordering_light(self):
        # 200 paired trials at one SNR; the full grid runs in acceptance
        err_nls, err_mmse = [], []
        for t in range(200):
            truth, pre = build_trial(4, 3, snr_db=15.0, seed=2000 + t)
            err_nls.append(abs(nls_calibrate(pre).gamma_hat - truth.gain_ratio) ** 2)
            err_mmse.append(abs(mmse_calibrate(pre).gamma_hat - truth.gain_ratio) ** 2)
        assert np.sqrt(np.mean(err_mmse)) < np.sqrt(np.mean(err_nls))


class TestCorrelatedNoise:
    """Kronecker-correlated noise drives the covariance modes apart."""

    @staticmethod
    def _correlated_cfg(m_a, m_b, snr_db, seed):
        from scipy.linalg import toeplitz

        from repcal import KroneckerNoise, ScenarioConfig

        corr = lambda n, rho: toeplitz(rho ** np.arange(n)).astype(complex)
        s2 = 10.0 ** (-snr_db / 10.0)
        factors = KroneckerNoise(omega_a=s2 * corr(m_a, 0.8), psi_a=corr(m_b, 0.7),
                                 omega_b=s2 * corr(m_b, 0.8), psi_b=corr(m_a, 0.7))
        return ScenarioConfig(m_a=m_a, m_b=m_b, snr_db=snr_db, noise_mode="kronecker",
                              noise_factors=factors, master_seed=seed)

    def test_full_whitening_helps_gamma_stage(self):
        # with oracle inputs the whitened projection is the matched filter,
        # so the full mode must beat the diagonal one under correlation
        from repcal import draw_ground_truth, generate_measurements, preprocess, trial_rng

        cfg = self._correlated_cfg(6, 5, 5.0, 55)
        err_d, err_f = [], []
        for t in range(400):
            rng = trial_rng(55, 0, t)
            truth = draw_ground_truth(cfg, rng)
            meas = generate_measurements(truth, cfg, rng)
            z_true = (truth.forward_gain * truth.rx_b[:, None]
                      * np.outer(truth.rep_to_b, truth.rep_to_a) * truth.tx_a[None, :])
            a_true = truth.rx_a / truth.tx_a
            b_true = truth.tx_b / truth.rx_b
            za, zb = np.zeros(6), np.zeros(5)
            for mode, acc in (("diagonal", err_d), ("full", err_f)):
                pre = preprocess(meas, cfg.raw_noise_factors(), mode=mode)
                g, _, _ = estimate_gamma(pre, z_true, a_true, za, b_true, zb,
                                         MmseConfig(cov_mode=mode, phi_gamma_mode=1.0))
                acc.append(abs(g - truth.gain_ratio) ** 2)
        assert np.sqrt(np.mean(err_f)) < 0.6 * np.sqrt(np.mean(err_d))

    def test_estimators_run_clean_under_correlation(self):
        from repcal import draw_ground_truth, generate_measurements, preprocess, trial_rng

        cfg = self._correlated_cfg(6, 5, 10.0, 56)
        err = {"nls": [], "diag": [], "full": []}
        for t in range(200):
            rng = trial_rng(56, 0, t)
            truth = draw_ground_truth(cfg, rng)
            meas = generate_measurements(truth, cfg, rng)
            g = truth.gain_ratio
            pre_d = preprocess(meas, cfg.raw_noise_factors(), mode="diagonal")
            pre_f = preprocess(meas, cfg.raw_noise_factors(), mode="full")
            err["nls"].append(abs(nls_calibrate(pre_d, n_iter=50).gamma_hat - g) ** 2)
            for mode, pre in (("diag", pre_d), ("full", pre_f)):
                est = mmse_calibrate(pre, MmseConfig(n_iter=50, cov_mode=pre.noise.mode))
                assert not est.flags
                err[mode].append(abs(est.gamma_hat - g) ** 2)
        rmse = {k: float(np.sqrt(np.mean(v))) for k, v in err.items()}
        assert rmse["diag"] < 0.9 * rmse["nls"]
        assert rmse["full"] < 0.9 * rmse["nls"]


class TestFullRun:
    def test_noiseless_converges_in_four_sweeps(self):
        for seed in range(3):
            truth, pre = build_trial(4, 3, seed=seed, noiseless=True, stats_snr_db=200.0)
            est = mmse_calibrate(pre, MmseConfig(n_iter=4))
            assert abs(est.gamma_hat - truth.gain_ratio) < 1e-4 * abs(truth.gain_ratio)

    def test_posterior_mses_within_bounds(self):
        _, pre = build_trial(6, 5, snr_db=0.0, seed=20)
        est = mmse_calibrate(pre, MmseConfig(n_iter=10))
        assert np.all((est.mse_a >= 0) & (est.mse_a <= 1))
        assert np.all((est.mse_b >= 0) & (est.mse_b <= 1))
        assert est.mse_gamma >= 0

    def test_trace_matches_final_estimate(self):
        _, pre = build_trial(4, 4, snr_db=15.0, seed=21)
        est = mmse_calibrate(pre, MmseConfig(n_iter=6), record_trace=True)
        assert len(est.trace) == 6
        assert est.trace[-1].gamma == est.gamma_hat

    def test_trace_does_not_perturb_run(self):
        _, pre = build_trial(4, 4, snr_db=15.0, seed=22)
        with_trace = mmse_calibrate(pre, MmseConfig(n_iter=6), record_trace=True)
        without = mmse_calibrate(pre, MmseConfig(n_iter=6))
        assert with_trace.gamma_hat == without.gamma_hat

    def test_phi_gamma_modes(self):
        truth, pre = build_trial(4, 4, snr_db=15.0, seed=23)
        for mode in ("unity", "mom", 1.0):
            est = mmse_calibrate(pre, MmseConfig(n_iter=10, phi_gamma_mode=mode))
            assert abs(est.gamma_hat - truth.gain_ratio) < 0.5

    def test_config_validation(self):
        with pytest.raises(ValueError):
            MmseConfig(n_iter=0)
        with pytest.raises(ValueError):
            MmseConfig(cov_mode="sparse")
        with pytest.raises(ValueError):
            MmseConfig(phi_gamma_mode="guess")
        with pytest.raises(ValueError):
            MmseConfig(phi_gamma_mode=-1.0)
        with pytest.raises(ValueError):
            MmseConfig(damping=0.0)
