"""Ground-truth synthesis and measurement-model tests."""

import numpy as np
import pytest

from repcal import (GroundTruth, KroneckerNoise, ScenarioConfig, draw_ground_truth,
                    forward_channel, generate_measurements, reverse_channel, trial_rng)


def _unit_truth(m_a, m_b, alpha=1.0 + 0j, beta=1.0 + 0j, seed=0):
    """Truth with identity transceiver coefficients for symmetry checks."""
    rng = np.random.default_rng(seed)
    direct = (rng.standard_normal((m_b, m_a)) + 1j * rng.standard_normal((m_b, m_a))) / np.sqrt(2)
    return GroundTruth(direct=direct,
                       rep_to_a=np.exp(1j * rng.uniform(-np.pi, np.pi, m_a)),
                       rep_to_b=np.exp(1j * rng.uniform(-np.pi, np.pi, m_b)),
                       tx_a=np.ones(m_a, complex), rx_a=np.ones(m_a, complex),
                       tx_b=np.ones(m_b, complex), rx_b=np.ones(m_b, complex),
                       forward_gain=alpha, reverse_gain=beta)


class TestGroundTruth:
    def test_repeater_gain_magnitude(self):
        cfg = ScenarioConfig(m_a=4, m_b=3, alpha_gain_db=10.0, master_seed=1)
        truth = draw_ground_truth(cfg, trial_rng(1, 0))
        assert abs(truth.forward_gain) == pytest.approx(np.sqrt(10.0), abs=1e-12)

    def test_unit_modulus_coefficients(self):
        cfg = ScenarioConfig(m_a=5, m_b=4, master_seed=2)
        truth = draw_ground_truth(cfg, trial_rng(2, 0))
        for coeffs in (truth.tx_a, truth.rx_a, truth.tx_b, truth.rx_b):
            np.testing.assert_allclose(np.abs(coeffs), 1.0, atol=1e-12)

    def test_amplitude_errors_when_configured(self):
        cfg = ScenarioConfig(m_a=64, m_b=64, amplitude_error_std=0.05, master_seed=3)
        truth = draw_ground_truth(cfg, trial_rng(3, 0))
        spread = np.std(np.abs(np.concatenate([truth.tx_a, truth.rx_a, truth.tx_b, truth.rx_b])))
        assert 0.02 < spread < 0.10

    def test_gain_ratio_definition(self):
        cfg = ScenarioConfig(m_a=2, m_b=2, master_seed=4)
        truth = draw_ground_truth(cfg, trial_rng(4, 0))
        assert truth.gain_ratio * truth.forward_gain == pytest.approx(truth.reverse_gain, rel=1e-14)

    def test_repeater_channels_are_steering_vectors(self):
        # unit-modulus line-of-sight responses, squared norm = element count
        cfg = ScenarioConfig(m_a=6, m_b=5, master_seed=5)
        truth = draw_ground_truth(cfg, trial_rng(5, 0))
        np.testing.assert_allclose(np.abs(truth.rep_to_a), 1.0, atol=1e-12)
        np.testing.assert_allclose(np.abs(truth.rep_to_b), 1.0, atol=1e-12)
        assert np.linalg.norm(truth.rep_to_a) ** 2 == pytest.approx(6.0, rel=1e-12)

    def test_determinism(self):
        cfg = ScenarioConfig(m_a=4, m_b=3, master_seed=6)
        t1 = draw_ground_truth(cfg, trial_rng(6, 0, 0))
        t2 = draw_ground_truth(cfg, trial_rng(6, 0, 0))
        np.testing.assert_array_equal(t1.direct, t2.direct)
        np.testing.assert_array_equal(t1.tx_a, t2.tx_a)
        assert t1.forward_gain == t2.forward_gain

    def test_distinct_trials_differ(self):
        cfg = ScenarioConfig(m_a=4, m_b=3, master_seed=6)
        t1 = draw_ground_truth(cfg, trial_rng(6, 0, 0))
        t2 = draw_ground_truth(cfg, trial_rng(6, 0, 1))
        assert not np.allclose(t1.direct, t2.direct)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ScenarioConfig(m_a=0, m_b=3)
        with pytest.raises(ValueError):
            ScenarioConfig(m_a=2, m_b=2, amplitude_error_std=-0.1)
        with pytest.raises(ValueError):
            ScenarioConfig(m_a=2, m_b=2, noise_mode="pink")
        with pytest.raises(ValueError):
            ScenarioConfig(m_a=2, m_b=2, noise_mode="kronecker")


class TestMeasurements:
    def test_passive_medium_reciprocity(self):
        # identity coefficients and equal gains: reverse = forward transposed
        truth = _unit_truth(4, 3, alpha=2.0 + 1j, beta=2.0 + 1j)
        np.testing.assert_allclose(reverse_channel(truth), forward_channel(truth).T, atol=1e-12)

    def test_noiseless_difference_isolates_repeater_path(self):
        cfg = ScenarioConfig(m_a=4, m_b=3, snr_db=np.inf, master_seed=7)
        rng = trial_rng(7, 0)
        truth = draw_ground_truth(cfg, rng)
        meas = generate_measurements(truth, cfg, rng)
        path = truth.rx_b[:, None] * np.outer(truth.rep_to_b, truth.rep_to_a) * truth.tx_a[None, :]
        np.testing.assert_allclose(meas.x_ab0 - meas.x_ab1,
                                   2.0 * truth.forward_gain * path, atol=1e-12)

    def test_noiseless_sum_isolates_direct_path(self):
        cfg = ScenarioConfig(m_a=4, m_b=3, snr_db=np.inf, master_seed=8)
        rng = trial_rng(8, 0)
        truth = draw_ground_truth(cfg, rng)
        meas = generate_measurements(truth, cfg, rng)
        direct = truth.rx_b[:, None] * truth.direct * truth.tx_a[None, :]
        np.testing.assert_allclose(meas.x_ab0 + meas.x_ab1, 2.0 * direct, atol=1e-12)

    def test_white_noise_variance(self):
        # SNR 0 dB: unit per-entry noise variance, 1e4 measurement draws
        cfg = ScenarioConfig(m_a=1, m_b=1, snr_db=0.0, master_seed=9)
        rng = trial_rng(9, 0)
        truth = draw_ground_truth(cfg, rng)
        clean = forward_channel(truth)[0, 0]
        samples = np.array([generate_measurements(truth, cfg, rng).x_ab0[0, 0] - clean
                            for _ in range(10_000)])
        assert abs(np.mean(np.abs(samples) ** 2) - 1.0) < 0.03

    def test_kronecker_mode_matches_white(self):
        # identity factors scaled to sigma^2 reproduce white statistics
        sigma2 = 0.25
        factors = KroneckerNoise(omega_a=sigma2 * np.eye(2), psi_a=np.eye(3),
                                 omega_b=sigma2 * np.eye(3), psi_b=np.eye(2))
        cfg = ScenarioConfig(m_a=2, m_b=3, snr_db=10.0, noise_mode="kronecker",
                             noise_factors=factors, master_seed=10)
        rng = trial_rng(10, 0)
        truth = draw_ground_truth(cfg, rng)
        clean = forward_channel(truth)
        err = np.stack([generate_measurements(truth, cfg, rng).x_ab0 - clean
                        for _ in range(4000)])
        assert abs(np.mean(np.abs(err) ** 2) - sigma2) < 0.02

    def test_measurement_determinism(self):
        cfg = ScenarioConfig(m_a=3, m_b=2, snr_db=5.0, master_seed=11)
        t1 = draw_ground_truth(cfg, trial_rng(11, 0))
        m1 = generate_measurements(t1, cfg, trial_rng(11, 1))
        m2 = generate_measurements(t1, cfg, trial_rng(11, 1))
        np.testing.assert_array_equal(m1.x_ab0, m2.x_ab0)
        np.testing.assert_array_equal(m1.x_ba1, m2.x_ba1)
