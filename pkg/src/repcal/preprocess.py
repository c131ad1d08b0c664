"""Sum/difference combining of the four raw measurements.

Averaging the nominal and pi-shifted pilots isolates the direct channel;
differencing isolates the repeater path. The averaged noise keeps the
separable structure with its spatial covariance halved.
"""

from dataclasses import dataclass

import numpy as np

from .validation import as_complex_matrix, check_hermitian_psd, check_shape


@dataclass
class NoiseStatistics:
    """Covariance descriptors of the combined (averaged) noise.

    omega_a/psi_a describe the noise on the reverse-link combinations
    (r3, r4; shape m_a x m_b): each column has covariance psi_a[j,j]*omega_a
    and each row has covariance omega_a[i,i]*psi_a, with
    cov(vec(W)) = psi_a kron omega_a. omega_b/psi_b play the same roles
    for the forward-link combinations (r1, r2). The omega factors are the
    raw spatial covariances halved by the averaging; the psi factors are
    temporal correlations, unit-diagonal by convention. In `diagonal`
    mode estimators consult only the main diagonals.
    """

    omega_a: np.ndarray
    psi_a: np.ndarray
    omega_b: np.ndarray
    psi_b: np.ndarray
    mode: str = "full"

    def __post_init__(self):
        if self.mode not in ("full", "diagonal"):
            raise ValueError(f"unknown noise mode {self.mode!r}")

    def validate(self, m_a, m_b):
        check_shape(check_hermitian_psd(self.omega_a, "omega_a"), (m_a, m_a), "omega_a")
        check_shape(check_hermitian_psd(self.psi_a, "psi_a"), (m_b, m_b), "psi_a")
        check_shape(check_hermitian_psd(self.omega_b, "omega_b"), (m_b, m_b), "omega_b")
        check_shape(check_hermitian_psd(self.psi_b, "psi_b"), (m_a, m_a), "psi_b")
        return self

    def forward_entry_var(self):
        """Per-entry variance of the combined forward-link noise (m_b x m_a)."""
        return np.outer(np.real(np.diag(self.omega_b)), np.real(np.diag(self.psi_b)))


@dataclass
class PreprocessedSet:
    """Calibration observations r1..r4 plus their noise statistics.

    r1 carries the direct channel, r2 the repeater path (rank one when
    noiseless), r3 and r4 their reverse-direction images scaled by the
    transceiver coefficients and the gain ratio.
    """

    r1: np.ndarray  # m_b x m_a
    r2: np.ndarray  # m_b x m_a
    r3: np.ndarray  # m_a x m_b
    r4: np.ndarray  # m_a x m_b
    noise: NoiseStatistics


def preprocess(meas, raw_noise, mode="full"):
    """Form r1..r4 and the averaged-noise statistics from raw measurements.

    `raw_noise` is a KroneckerNoise holding the covariance factors of the
    raw per-measurement noise; averaging two independent measurements
    halves the covariance, which is folded into the spatial factors.
    """
    x_ab0 = as_complex_matrix(meas.x_ab0, "x_ab0")
    x_ab1 = check_shape(as_complex_matrix(meas.x_ab1, "x_ab1"), x_ab0.shape, "x_ab1")
    x_ba0 = as_complex_matrix(meas.x_ba0, "x_ba0")
    x_ba1 = check_shape(as_complex_matrix(meas.x_ba1, "x_ba1"), x_ba0.shape, "x_ba1")
    m_b, m_a = x_ab0.shape
    if x_ba0.shape != (m_a, m_b):
        raise ValueError(f"reverse measurements have shape {x_ba0.shape}, expected {(m_a, m_b)}")

    noise = NoiseStatistics(
        omega_a=np.asarray(raw_noise.omega_a, dtype=complex) / 2.0,
        psi_a=np.asarray(raw_noise.psi_a, dtype=complex),
        omega_b=np.asarray(raw_noise.omega_b, dtype=complex) / 2.0,
        psi_b=np.asarray(raw_noise.psi_b, dtype=complex),
        mode=mode,
    ).validate(m_a, m_b)

    return PreprocessedSet(
        r1=(x_ab0 + x_ab1) / 2.0,
        r2=(x_ab0 - x_ab1) / 2.0,
        r3=(x_ba0 + x_ba1) / 2.0,
        r4=(x_ba0 - x_ba1) / 2.0,
        noise=noise,
    )
