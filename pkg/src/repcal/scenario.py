"""Ground-truth synthesis and raw measurement generation.

Two antenna arrays A (m_a elements) and B (m_b elements) communicate over
a direct Rayleigh channel and through a dual-antenna repeater with forward
gain alpha and reverse gain beta. Bidirectional pilots are exchanged twice,
once with the repeater in its nominal configuration and once with a
pi-phase shift applied to both gains, giving four noisy channel
measurements per trial.
"""

from dataclasses import dataclass, field

import numpy as np

from .mathkit import dft_column, sample_matrix_gaussian
from .validation import check_hermitian_psd, check_shape


@dataclass
class KroneckerNoise:
    """Separable covariance factors for the raw measurement noise.

    omega_* are the spatial (per-column) covariances and carry the noise
    power; psi_* are temporal correlation factors across pilot slots and
    are conventionally unit-diagonal. The stacked noise at array A
    satisfies cov(vec(W_A)) = psi_a kron omega_a, and likewise at B.
    """

    omega_a: np.ndarray
    psi_a: np.ndarray
    omega_b: np.ndarray
    psi_b: np.ndarray

    def validate(self, m_a, m_b):
        check_shape(check_hermitian_psd(self.omega_a, "omega_a"), (m_a, m_a), "omega_a")
        check_shape(check_hermitian_psd(self.psi_a, "psi_a"), (m_b, m_b), "psi_a")
        check_shape(check_hermitian_psd(self.omega_b, "omega_b"), (m_b, m_b), "omega_b")
        check_shape(check_hermitian_psd(self.psi_b, "psi_b"), (m_a, m_a), "psi_b")
        return self


@dataclass
class ScenarioConfig:
    """All experiment knobs for one simulated calibration scenario.

    snr_db sets the white-noise level through sigma^2 = 10**(-snr_db/10)
    (the inverse noise variance is the SNR); alpha/beta gains are the
    repeater power gains |alpha|^2, |beta|^2 in dB. amplitude_error_std
    is the per-branch multiplicative amplitude error of the transceiver
    coefficients and should be << 1; 0 gives unit-modulus coefficients.
    """

    m_a: int
    m_b: int
    alpha_gain_db: float = 10.0
    beta_gain_db: float = 10.0
    snr_db: float = 20.0
    amplitude_error_std: float = 0.0
    noise_mode: str = "white"
    noise_factors: KroneckerNoise | None = None
    master_seed: int = 0

    def __post_init__(self):
        if self.m_a < 1 or self.m_b < 1:
            raise ValueError("array sizes must be at least 1")
        if self.amplitude_error_std < 0:
            raise ValueError("amplitude_error_std must be nonnegative")
        if self.noise_mode not in ("white", "kronecker"):
            raise ValueError(f"unknown noise_mode {self.noise_mode!r}")
        if self.noise_mode == "kronecker":
            if self.noise_factors is None:
                raise ValueError("kronecker noise_mode requires noise_factors")
            self.noise_factors.validate(self.m_a, self.m_b)

    @property
    def sigma2(self):
        return 10.0 ** (-self.snr_db / 10.0)

    def raw_noise_factors(self):
        """Covariance factors of the raw (pre-averaging) noise."""
        if self.noise_mode == "kronecker":
            return self.noise_factors
        s2 = self.sigma2
        return KroneckerNoise(
            omega_a=s2 * np.eye(self.m_a),
            psi_a=np.eye(self.m_b),
            omega_b=s2 * np.eye(self.m_b),
            psi_b=np.eye(self.m_a),
        )


@dataclass
class GroundTruth:
    """One realization of every unknown in the two-array repeater link."""

    direct: np.ndarray        # m_b x m_a direct channel A -> B
    rep_to_a: np.ndarray      # length m_a channel between repeater and A
    rep_to_b: np.ndarray      # length m_b channel between repeater and B
    tx_a: np.ndarray          # diagonal transmit coefficients, array A
    rx_a: np.ndarray
    tx_b: np.ndarray
    rx_b: np.ndarray
    forward_gain: complex     # repeater gain A -> B
    reverse_gain: complex     # repeater gain B -> A
    gain_ratio: complex = field(init=False)  # reverse_gain / forward_gain

    def __post_init__(self):
        self.gain_ratio = self.reverse_gain / self.forward_gain


@dataclass
class MeasurementSet:
    """Four bidirectional pilot measurements (nominal and pi-shifted)."""

    x_ab0: np.ndarray  # m_b x m_a, repeater nominal
    x_ba0: np.ndarray  # m_a x m_b, repeater nominal
    x_ab1: np.ndarray  # m_b x m_a, repeater pi-shifted
    x_ba1: np.ndarray  # m_a x m_b, repeater pi-shifted


def trial_rng(master_seed, *key):
    """Independent generator for (master_seed, key...), any worker order."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, key)]))


def _reciprocity_coeffs(n, sigma_eps, rng):
    eps = rng.normal(0.0, sigma_eps, n) if sigma_eps > 0 else np.zeros(n)
    theta = rng.uniform(-np.pi, np.pi, n)
    return (1.0 + eps) * np.exp(1j * theta)


def draw_ground_truth(cfg, rng):
    """Sample channels, transceiver coefficients and repeater gains.

    The direct channel is i.i.d. CN(0,1) Rayleigh fading. The repeater
    link vectors are random columns of the (unnormalized) DFT matrices,
    i.e. unit-modulus line-of-sight steering responses of norm sqrt(m).
    Repeater gain magnitudes come from the configured dB power gains;
    their phases are uniform on [-pi, pi).
    """
    m_a, m_b = cfg.m_a, cfg.m_b
    direct = (rng.standard_normal((m_b, m_a)) + 1j * rng.standard_normal((m_b, m_a))) / np.sqrt(2)
    k_a = int(rng.integers(m_a))
    k_b = int(rng.integers(m_b))
    rep_to_a = np.sqrt(m_a) * dft_column(m_a, k_a)
    rep_to_b = np.sqrt(m_b) * dft_column(m_b, k_b)
    sig_eps = cfg.amplitude_error_std
    tx_a = _reciprocity_coeffs(m_a, sig_eps, rng)
    rx_a = _reciprocity_coeffs(m_a, sig_eps, rng)
    tx_b = _reciprocity_coeffs(m_b, sig_eps, rng)
    rx_b = _reciprocity_coeffs(m_b, sig_eps, rng)
    forward = 10.0 ** (cfg.alpha_gain_db / 20.0) * np.exp(1j * rng.uniform(-np.pi, np.pi))
    reverse = 10.0 ** (cfg.beta_gain_db / 20.0) * np.exp(1j * rng.uniform(-np.pi, np.pi))
    return GroundTruth(direct, rep_to_a, rep_to_b, tx_a, rx_a, tx_b, rx_b, forward, reverse)


def forward_channel(truth, flip=False):
    """Noise-free A -> B channel; `flip` applies the pi-shift configuration."""
    sgn = -1.0 if flip else 1.0
    path = truth.direct + sgn * truth.forward_gain * np.outer(truth.rep_to_b, truth.rep_to_a)
    return truth.rx_b[:, None] * path * truth.tx_a[None, :]


def reverse_channel(truth, flip=False):
    """Noise-free B -> A channel; `flip` applies the pi-shift configuration."""
    sgn = -1.0 if flip else 1.0
    path = truth.direct.T + sgn * truth.reverse_gain * np.outer(truth.rep_to_a, truth.rep_to_b)
    return truth.rx_a[:, None] * path * truth.tx_b[None, :]


def generate_measurements(truth, cfg, rng):
    """Four noisy pilot measurements for one coherence interval.

    White mode draws i.i.d. CN(0, sigma^2) entries; kronecker mode samples
    matrix-variate noise from the configured separable covariances. Noise
    draw order is fixed (B0, A0, B1, A1) for reproducibility.
    """
    m_a, m_b = cfg.m_a, cfg.m_b
    if cfg.noise_mode == "white":
        sig = np.sqrt(cfg.sigma2 / 2.0)
        draw = lambda r, c: sig * (rng.standard_normal((r, c)) + 1j * rng.standard_normal((r, c)))
        w_b0, w_a0 = draw(m_b, m_a), draw(m_a, m_b)
        w_b1, w_a1 = draw(m_b, m_a), draw(m_a, m_b)
    else:
        nf = cfg.noise_factors
        w_b0 = sample_matrix_gaussian(m_b, m_a, nf.omega_b, nf.psi_b, rng)
        w_a0 = sample_matrix_gaussian(m_a, m_b, nf.omega_a, nf.psi_a, rng)
        w_b1 = sample_matrix_gaussian(m_b, m_a, nf.omega_b, nf.psi_b, rng)
        w_a1 = sample_matrix_gaussian(m_a, m_b, nf.omega_a, nf.psi_a, rng)
    return MeasurementSet(
        x_ab0=forward_channel(truth) + w_b0,
        x_ba0=reverse_channel(truth) + w_a0,
        x_ab1=forward_channel(truth, flip=True) + w_b1,
        x_ba1=reverse_channel(truth, flip=True) + w_a1,
    )
