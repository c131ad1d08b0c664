"""Alternating-optimization refinement of the least-squares calibration.

Starting from the stepwise solution, each outer pass refreshes the direct
channel from both links, re-sweeps the transceiver coefficients using the
gain-weighted difference observation, refreshes the repeater path from a
combined rank-one fit, and re-projects the gain ratio. Passes continue
while the joint objective keeps decreasing; the repeater-path refresh is a
heuristic rather than an exact coordinate minimizer, so the best iterate
seen so far is tracked and returned.
"""

import numpy as np

from .mathkit import rank_one_approx
from .nls import nls_calibrate, _gamma_projection
from .results import CalibrationEstimate, TraceEntry, nls_objective

_CLAMP = 1e-9
_TINY = 1e-300


def _update_h(r1, r3, a_hat, b_hat):
    """Joint least-squares refresh of the direct channel.

    With diagonal coefficient matrices the stacked normal equations
    decouple per entry; this is the closed-form solution of the dense
    system built from [vec(r1); vec(r3^T)] with regressor [I; A kron B].
    """
    prod = np.outer(b_hat, a_hat)  # (m_b, m_a): b_j * a_i
    return (r1 + np.conj(prod) * r3.T) / (1.0 + np.abs(prod) ** 2)


def _weighted_sweep_terms(h_hat, z_hat, r3, r4, gamma_hat):
    """Cross and power terms of the gain-weighted coefficient sweeps.

    Constant while h_hat, z_hat and gamma_hat are held fixed, so the inner
    alternating loop reduces to two matrix-vector products per side.
    """
    g2 = np.abs(gamma_hat) ** 2
    gc = np.conj(gamma_hat)
    cross_a = np.conj(h_hat) * r3.T + gc * (np.conj(z_hat) * r4.T)
    cross_b = np.conj(h_hat.T) * r3 + gc * (np.conj(z_hat.T) * r4)
    power_a = np.abs(h_hat) ** 2 + g2 * np.abs(z_hat) ** 2
    return cross_a, cross_b, power_a


def _weighted_ab_sweep(cross_a, cross_b, power_a, a_hat, b_hat):
    num = np.conj(b_hat) @ cross_a
    den = (b_hat.real ** 2 + b_hat.imag ** 2) @ power_a
    a_hat = np.where(den > _TINY, num / np.where(den > _TINY, den, 1.0), a_hat)

    num = np.conj(a_hat) @ cross_b
    den = (a_hat.real ** 2 + a_hat.imag ** 2) @ power_a.T
    b_hat = np.where(den > _TINY, num / np.where(den > _TINY, den, 1.0), b_hat)

    scale = np.linalg.norm(b_hat)
    if scale > _TINY:
        a_hat, b_hat = a_hat * scale, b_hat / scale
    return a_hat, b_hat


def _clamped_reciprocal(c):
    """1/c with the magnitude floored at _CLAMP, phase preserved."""
    mag = np.abs(c)
    clipped = np.where(mag < _CLAMP, True, False)
    safe = np.where(clipped, _CLAMP * np.exp(1j * np.angle(np.where(mag > 0, c, 1.0))), c)
    return 1.0 / safe, bool(np.any(clipped))


def aonls_calibrate(pre, n_iter=100, max_outer=20, rel_tol=1e-6):
    """Alternating optimization over all unknowns until the objective stalls.

    Stops when the relative objective decrease drops below rel_tol or
    after max_outer passes; if a pass increases the objective the run is
    flagged and the best iterate so far is returned. The trace records one
    entry per accepted outer pass, so its objectives are nonincreasing.
    """
    if max_outer < 1:
        raise ValueError("max_outer must be at least 1")
    if not rel_tol > 0:
        raise ValueError("rel_tol must be positive")
    est = nls_calibrate(pre, n_iter=n_iter)
    h_hat, z_hat = est.h_hat, est.z_hat
    a_hat, b_hat, gamma_hat = est.a_hat, est.b_hat, est.gamma_hat

    f_prev = nls_objective(pre, h_hat, z_hat, a_hat, b_hat, gamma_hat)
    best = (f_prev, h_hat, z_hat, a_hat, b_hat, gamma_hat)
    flags = list(est.flags)
    trace = []
    passes = 0
    for outer in range(1, max_outer + 1):
        h_hat = _update_h(pre.r1, pre.r3, a_hat, b_hat)
        cross_a, cross_b, power_a = _weighted_sweep_terms(h_hat, z_hat, pre.r3, pre.r4, gamma_hat)
        for _ in range(n_iter):
            a_hat, b_hat = _weighted_ab_sweep(cross_a, cross_b, power_a, a_hat, b_hat)
        inv_b, clamped_b = _clamped_reciprocal(b_hat)
        inv_a, clamped_a = _clamped_reciprocal(a_hat)
        if (clamped_a or clamped_b) and "z_step_clamped" not in flags:
            flags.append("z_step_clamped")
        combined = (pre.r2 + np.conj(gamma_hat) * (inv_b[:, None] * pre.r4.T * inv_a[None, :]))
        z_hat = rank_one_approx(combined / (1.0 + np.abs(gamma_hat) ** 2)).reconstruct()
        gamma_hat = _gamma_projection(a_hat, z_hat, b_hat, pre.r4)

        f = nls_objective(pre, h_hat, z_hat, a_hat, b_hat, gamma_hat)
        passes = outer
        if f > f_prev:
            flags.append("objective_diverged")
            break
        best = (f, h_hat, z_hat, a_hat, b_hat, gamma_hat)
        trace.append(TraceEntry(outer, gamma=gamma_hat, objective=f))
        if f_prev - f <= rel_tol * max(f_prev, _TINY):
            break
        f_prev = f

    _, h_hat, z_hat, a_hat, b_hat, gamma_hat = best
    return CalibrationEstimate(h_hat=h_hat, z_hat=z_hat, a_hat=a_hat, b_hat=b_hat,
                               gamma_hat=gamma_hat, trace=trace, flags=tuple(flags),
                               outer_passes=passes)
