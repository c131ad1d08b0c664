"""Bayesian minimum mean-square-error calibration.

The direct channel and the repeater path are kept as point estimates
(r1 and the rank-one fit of r2, no usable priors). The transceiver-ratio
diagonals are inferred iteratively: each coefficient's interfering terms
(channel estimation error, the other side's residual error, measurement
noise) are collapsed into a single Gaussian whose covariance is refreshed
from the current posterior variances, giving a scalar pseudo-observation
that is denoised onto the unit circle. The gain ratio is finally estimated
the same way from the vectorized difference observation, with its prior
circle radius either fixed or estimated by the method of moments.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import i0e, i1e

from .denoise import CirclePrior, von_mises_denoise
from .mathkit import kron, rank_one_approx, vec
from .results import CalibrationEstimate, CalibrationError, TraceEntry

_TINY = 1e-300


@dataclass
class MmseConfig:
    """Knobs of the Bayesian calibrator.

    cov_mode `full` applies whitening with the complete noise covariances;
    `diagonal` keeps only their main diagonals so every inverse becomes an
    element-wise reciprocal (identical results when all covariances are
    scaled identities). phi_gamma_mode sets the prior second moment of the
    gain ratio: "unity", "mom" (method-of-moments estimate from the data),
    or a known positive value. damping < 1 blends each sweep's output with
    the previous iterate; the default applies none.
    """

    n_iter: int = 100
    cov_mode: str = "diagonal"
    phi_gamma_mode: str | float = "mom"
    damping: float = 1.0

    def __post_init__(self):
        if self.n_iter < 1:
            raise ValueError("n_iter must be at least 1")
        if self.cov_mode not in ("full", "diagonal"):
            raise ValueError(f"unknown cov_mode {self.cov_mode!r}")
        if isinstance(self.phi_gamma_mode, str):
            if self.phi_gamma_mode not in ("unity", "mom"):
                raise ValueError(f"unknown phi_gamma_mode {self.phi_gamma_mode!r}")
        else:
            if not self.phi_gamma_mode > 0:
                raise ValueError("known phi_gamma value must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


@dataclass
class _SweepDirection:
    """Constant pieces of one coefficient update direction.

    Columns of `obs` are the per-coefficient observation vectors and
    `hmat` the matching channel columns; `cross` caches conj(hmat)*obs.
    `base_diag`/`base_scale`/`base_corr` describe the measurement-noise
    slice covariance, `other_scale`/`other_corr` the channel-error
    covariance propagated through the other side's coefficients, and
    `err_plus_sq` is |hmat|^2 plus the per-entry channel error variance
    (the factor multiplying the other side's posterior variances).
    """

    obs: np.ndarray
    hmat: np.ndarray
    cross: np.ndarray
    chan_sq: np.ndarray
    err_plus_sq: np.ndarray
    base_diag: np.ndarray
    base_scale: np.ndarray
    base_corr: np.ndarray
    other_scale: np.ndarray
    other_corr: np.ndarray
    other_corr_diag: np.ndarray
    base_stack: np.ndarray | None = field(default=None, repr=False)
    _work: np.ndarray | None = field(default=None, repr=False)
    _work2: np.ndarray | None = field(default=None, repr=False)
    _cwork: np.ndarray | None = field(default=None, repr=False)

    def full_base(self):
        if self.base_stack is None:
            self.base_stack = self.base_scale[:, None, None] * self.base_corr[None, :, :]
        return self.base_stack

    def buffers(self):
        if self._work is None:
            self._work = np.empty(self.base_diag.shape)
            self._work2 = np.empty(self.base_diag.shape)
            self._cwork = np.empty(self.cross.shape, dtype=complex)
        return self._work, self._work2, self._cwork


def _direction_a(pre, h_hat, noise):
    entry_var = noise.forward_entry_var()  # (m_b, m_a)
    oa_d = np.real(np.diag(noise.omega_a))
    pa_d = np.real(np.diag(noise.psi_a))
    ob_d = np.real(np.diag(noise.omega_b))
    pb_d = np.real(np.diag(noise.psi_b))
    chan_sq = np.abs(h_hat) ** 2
    return _SweepDirection(
        obs=pre.r3.T,
        hmat=h_hat,
        cross=np.conj(h_hat) * pre.r3.T,
        chan_sq=chan_sq,
        err_plus_sq=chan_sq + entry_var,
        base_diag=np.outer(pa_d, oa_d) + _TINY,  # floor keeps reciprocals finite
        base_scale=oa_d,
        base_corr=noise.psi_a,
        other_scale=pb_d,
        other_corr=noise.omega_b,
        other_corr_diag=ob_d,
    )


def _direction_b(pre, h_hat, noise):
    entry_var = noise.forward_entry_var()
    oa_d = np.real(np.diag(noise.omega_a))
    pa_d = np.real(np.diag(noise.psi_a))
    ob_d = np.real(np.diag(noise.omega_b))
    pb_d = np.real(np.diag(noise.psi_b))
    hmat = h_hat.T
    chan_sq = np.abs(hmat) ** 2
    return _SweepDirection(
        obs=pre.r3,
        hmat=hmat,
        cross=np.conj(hmat) * pre.r3,
        chan_sq=chan_sq,
        err_plus_sq=chan_sq + entry_var.T,
        base_diag=np.outer(oa_d, pa_d) + _TINY,  # floor keeps reciprocals finite
        base_scale=pa_d,
        base_corr=noise.omega_a,
        other_scale=ob_d,
        other_corr=noise.psi_b,
        other_corr_diag=pb_d,
    )


def _pseudo_observations(direction, coeff_other, v_other, cov_mode, need_psi=True):
    """Precision psi and weighted projection num of every coefficient.

    The scalar pseudo-observation is num/psi with variance 1/psi. For the
    unit-circle denoiser psi cancels out of the posterior (its Bessel
    argument is exactly 2*num), so the hot path skips it.
    """
    d = direction
    co_sq = np.abs(coeff_other) ** 2

    if cov_mode == "diagonal":
        w, w2, cw = d.buffers()
        # w accumulates the per-entry effective variance, then its reciprocal
        np.multiply(d.err_plus_sq, v_other[:, None], out=w)
        w += d.base_diag
        np.multiply.outer(co_sq * d.other_corr_diag, d.other_scale, out=w2)
        w += w2
        np.divide(1.0, w, out=w)
        np.multiply(d.cross, w, out=cw)
        num = np.conj(coeff_other) @ cw
        if not need_psi:
            return None, num
        np.multiply(d.chan_sq, w, out=w)
        psi = co_sq @ w
        return psi, num

    m = d.obs.shape[0]
    var_mat = d.err_plus_sq * v_other[:, None]
    other_cov = (coeff_other[:, None] * d.other_corr) * np.conj(coeff_other)[None, :]
    cov = d.full_base() + d.other_scale[:, None, None] * other_cov[None, :, :]
    idx = np.arange(m)
    cov[:, idx, idx] += var_mat.T
    lin = (coeff_other[:, None] * d.hmat).T  # (n, m)
    rhs = np.stack([lin, d.obs.T], axis=2)   # (n, m, 2)
    sol = np.linalg.solve(cov, rhs)
    num = np.einsum("nm,nm->n", np.conj(lin), sol[:, :, 1])
    if not need_psi:
        return None, num
    psi = np.real(np.einsum("nm,nm->n", np.conj(lin), sol[:, :, 0]))
    return psi, num


def _half_sweep(direction, coeff_other, v_other, prev_coeff, prev_v, cov_mode, damping):
    """Pseudo-observation and unit-circle denoising for one coefficient set.

    Returns the updated coefficients, their posterior MSEs, and whether any
    pseudo-observation was degenerate (those coefficients keep their
    previous value with a non-informative variance of 1).
    """
    _, num = _pseudo_observations(direction, coeff_other, v_other, cov_mode, need_psi=False)
    mag = np.abs(num)
    if np.isfinite(float(mag.sum())):
        # the scaled Bessel functions keep the ratio finite at any magnitude
        rho = i1e(2.0 * mag) / i0e(2.0 * mag)
        coeff = rho * num / (mag + _TINY)
        v_new = 1.0 - rho * rho
        flagged = False
    else:
        psi, num = _pseudo_observations(direction, coeff_other, v_other, cov_mode)
        ok = np.isfinite(psi) & (psi > 0) & np.isfinite(num)
        psi_safe = np.where(ok, psi, 1.0)
        res = von_mises_denoise(np.where(ok, num, 0.0) / psi_safe, 1.0 / psi_safe)
        coeff = np.where(ok, res.estimate, prev_coeff)
        v_new = np.where(ok, res.posterior_mse, 1.0)
        flagged = True
    if damping < 1.0:
        coeff = damping * coeff + (1.0 - damping) * prev_coeff
        v_new = damping * v_new + (1.0 - damping) * prev_v
    return coeff, v_new, flagged


def update_a(pre, h_hat, b_hat, v_b, cov_mode="diagonal", noise=None, a_prev=None,
             v_a_prev=None, damping=1.0):
    """One posterior update of the A-side coefficients given the B side."""
    noise = pre.noise if noise is None else noise
    m_a = pre.r1.shape[1]
    a_prev = np.ones(m_a, dtype=complex) if a_prev is None else a_prev
    v_a_prev = np.ones(m_a) if v_a_prev is None else v_a_prev
    direction = _direction_a(pre, h_hat, noise)
    return _half_sweep(direction, b_hat, v_b, a_prev, v_a_prev, cov_mode, damping)


def update_b(pre, h_hat, a_hat, v_a, cov_mode="diagonal", noise=None, b_prev=None,
             v_b_prev=None, damping=1.0):
    """One posterior update of the B-side coefficients given the A side."""
    noise = pre.noise if noise is None else noise
    m_b = pre.r1.shape[0]
    b_prev = np.ones(m_b, dtype=complex) if b_prev is None else b_prev
    v_b_prev = np.ones(m_b) if v_b_prev is None else v_b_prev
    direction = _direction_b(pre, h_hat, noise)
    return _half_sweep(direction, a_hat, v_a, b_prev, v_b_prev, cov_mode, damping)


def mom_gamma_magnitude(r4, d_hat, sigma_a, v_gamma_diag):
    """Method-of-moments estimate of the squared gain-ratio magnitude.

    Equates the single-sample second moment of the whitened projection of
    r4 onto the response estimate d_hat with its expectation and solves
    for |gamma|^2. `sigma_a` is the combined-noise covariance of vec(r4),
    either a full matrix or its diagonal as a 1-D vector; `v_gamma_diag`
    is the diagonal of the response-error covariance. The raw statistic
    can go negative in deep noise and is clamped at zero.
    """
    r4_vec = vec(r4)
    d_vec = np.asarray(d_hat).reshape(-1)
    if np.linalg.norm(d_vec) <= _TINY:
        raise CalibrationError("response estimate is zero; moment estimate undefined")
    sigma_a = np.asarray(sigma_a)
    if sigma_a.ndim == 1:
        sd = d_vec / sigma_a
        sr = r4_vec / sigma_a
    else:
        sol = np.linalg.solve(sigma_a, np.stack([d_vec, r4_vec], axis=1))
        sd, sr = sol[:, 0], sol[:, 1]
    q = complex(np.vdot(d_vec, sr))
    u = float(np.real(np.vdot(d_vec, sd)))
    s = float(np.real(np.sum(np.asarray(v_gamma_diag) * (sd.real ** 2 + sd.imag ** 2))))
    return max(0.0, (abs(q) ** 2 - u) / (u ** 2 + s))


def _sigma_vec_r4(noise, cov_mode):
    """Covariance of vec(r4): psi_a kron omega_a, or its diagonal."""
    oa_d = np.real(np.diag(noise.omega_a))
    pa_d = np.real(np.diag(noise.psi_a))
    if cov_mode == "diagonal":
        return vec(np.outer(oa_d, pa_d))
    return kron(noise.psi_a, noise.omega_a)


def estimate_gamma(pre, z_hat, a_hat, v_a, b_hat, v_b, cfg, noise=None):
    """Posterior estimate of the gain ratio from the difference observation.

    Builds the response estimate diag(a) z^T diag(b), whitens vec(r4) by
    the combined noise-plus-response-error covariance, completes the
    square to a scalar pseudo-observation, and denoises it onto the circle
    whose radius comes from cfg.phi_gamma_mode. In "mom" mode the
    response-error covariance needed by the moment estimate is
    bootstrapped once with a provisional unit second moment.
    Returns (gamma_hat, posterior_mse, flags).
    """
    noise = pre.noise if noise is None else noise
    d_mat = a_hat[:, None] * z_hat.T * b_hat[None, :]
    d_vec = vec(d_mat)
    resp_err_unit = vec(np.abs(z_hat.T) ** 2
                        * (np.outer(v_a, np.abs(b_hat) ** 2)
                           + np.outer(np.abs(a_hat) ** 2, v_b)
                           + np.outer(v_a, v_b)))
    sigma = _sigma_vec_r4(noise, cfg.cov_mode)

    mode = cfg.phi_gamma_mode
    if mode == "unity":
        phi = 1.0
    elif mode == "mom":
        phi = mom_gamma_magnitude(pre.r4, d_vec, sigma, resp_err_unit)
    else:
        phi = float(mode)
    radius = float(np.sqrt(phi))
    if radius == 0.0:
        return 0j, 0.0, ("degenerate_gamma_prior",)

    resp_err = phi * resp_err_unit
    r4_vec = vec(pre.r4)
    if sigma.ndim == 1:
        total = sigma + resp_err
        sd = d_vec / total
        sr = r4_vec / total
    else:
        total = sigma + np.diag(resp_err)
        sol = np.linalg.solve(total, np.stack([d_vec, r4_vec], axis=1))
        sd, sr = sol[:, 0], sol[:, 1]
    psi = float(np.real(np.vdot(d_vec, sd)))
    if not (np.isfinite(psi) and psi > 0):
        raise CalibrationError("gain-ratio pseudo-observation is degenerate")
    pseudo = complex(np.vdot(d_vec, sr) / psi)
    res = von_mises_denoise(pseudo, 1.0 / psi, CirclePrior(radius=radius))
    return complex(res.estimate), float(res.posterior_mse), ()


def mmse_calibrate(pre, cfg=None, record_trace=False):
    """Full Bayesian calibration run on preprocessed observations.

    Point-estimates the direct channel and repeater path, runs cfg.n_iter
    alternating coefficient updates, then estimates the gain ratio. With
    record_trace the gain-ratio stage is additionally evaluated after
    every sweep (for convergence studies; the loop itself is unaffected).
    """
    cfg = MmseConfig() if cfg is None else cfg
    noise = pre.noise
    h_hat = pre.r1
    z_hat = rank_one_approx(pre.r2).reconstruct()
    m_b, m_a = h_hat.shape

    a_hat = np.ones(m_a, dtype=complex)
    b_hat = np.ones(m_b, dtype=complex)
    v_a = np.ones(m_a)
    v_b = np.ones(m_b)

    dir_a = _direction_a(pre, h_hat, noise)
    dir_b = _direction_b(pre, h_hat, noise)

    flags = []
    trace = []
    gamma_hat = None
    v_gamma = None
    for it in range(1, cfg.n_iter + 1):
        a_hat, v_a, flagged_a = _half_sweep(dir_a, b_hat, v_b, a_hat, v_a,
                                            cfg.cov_mode, cfg.damping)
        b_hat, v_b, flagged_b = _half_sweep(dir_b, a_hat, v_a, b_hat, v_b,
                                            cfg.cov_mode, cfg.damping)
        if (flagged_a or flagged_b) and "degenerate_pseudo_observation" not in flags:
            flags.append("degenerate_pseudo_observation")
        if record_trace:
            gamma_hat, v_gamma, gflags = estimate_gamma(pre, z_hat, a_hat, v_a, b_hat, v_b, cfg, noise)
            flags.extend(f for f in gflags if f not in flags)
            trace.append(TraceEntry(it, gamma=gamma_hat))

    if gamma_hat is None:
        gamma_hat, v_gamma, gflags = estimate_gamma(pre, z_hat, a_hat, v_a, b_hat, v_b, cfg, noise)
        flags.extend(f for f in gflags if f not in flags)

    return CalibrationEstimate(h_hat=h_hat, z_hat=z_hat, a_hat=a_hat, b_hat=b_hat,
                               gamma_hat=gamma_hat, trace=trace,
                               mse_a=v_a, mse_b=v_b, mse_gamma=v_gamma,
                               flags=tuple(flags))
