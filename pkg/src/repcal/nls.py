"""Stepwise nonlinear least-squares calibration.

Estimates the direct channel from r1, the repeater path from the best
rank-one approximation of r2, the diagonal transceiver-ratio matrices by
alternating per-coefficient least squares on r3, and finally the gain
ratio by a matched projection of r4.
"""

import numpy as np

from .mathkit import rank_one_approx
from .results import CalibrationEstimate, CalibrationError, TraceEntry, combined_repeater_response, nls_objective

_TINY = 1e-300


def _gamma_projection(a_hat, z_hat, b_hat, r4):
    d = combined_repeater_response(a_hat, z_hat, b_hat)
    den = np.linalg.norm(d) ** 2
    if den <= _TINY:
        raise CalibrationError("repeater response estimate vanished; gain ratio undefined")
    return complex(np.vdot(d, r4) / den)


def _coeff_update(coeff_other, cross, power, prev):
    """Per-coefficient least squares: conj(other) @ cross / (|other|^2 @ power).

    Coefficients whose regressor column has no energy keep their previous
    value; the caller is told so it can flag the run.
    """
    num = np.conj(coeff_other) @ cross
    den = (coeff_other.real ** 2 + coeff_other.imag ** 2) @ power
    ok = den > _TINY
    if bool(ok.all()):
        return num / den, False
    return np.where(ok, num / np.where(ok, den, 1.0), prev), True


def _sweep(cross_a, cross_b, power_a, power_b, a_hat, b_hat):
    a_hat, bad_a = _coeff_update(b_hat, cross_a, power_a, a_hat)
    b_hat, bad_b = _coeff_update(a_hat, cross_b, power_b, b_hat)
    scale = np.linalg.norm(b_hat)
    degenerate = bad_a or bad_b
    if scale > _TINY:
        a_hat = a_hat * scale
        b_hat = b_hat / scale
    else:
        degenerate = True
    return a_hat, b_hat, degenerate


def ab_sweep(h_hat, r3, a_hat, b_hat):
    """One alternating least-squares pass over both coefficient sets.

    Updates every diagonal of a_hat from the rows of the reverse
    observation, then every diagonal of b_hat from its columns, then
    rescales so that b_hat has unit Euclidean norm (the product is
    invariant; the rescaling only prevents numerical drift).
    """
    power = np.abs(h_hat) ** 2
    a_hat, b_hat, _ = _sweep(np.conj(h_hat) * r3.T, np.conj(h_hat.T) * r3,
                             power, power.T, a_hat, b_hat)
    return a_hat, b_hat


def nls_calibrate(pre, n_iter=100, a_init=None, b_init=None,
                  record_trace=False, record_objective=False):
    """Run the stepwise least-squares calibration on preprocessed data.

    a_init/b_init override the identity initialization of the coefficient
    sweeps (the final gain ratio is invariant to their joint scalar
    ambiguity). With record_trace the per-iteration gain-ratio estimate is
    kept; record_objective additionally stores the full objective.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be at least 1")
    h_hat = pre.r1
    z_hat = rank_one_approx(pre.r2).reconstruct()
    m_b, m_a = h_hat.shape
    a_hat = np.ones(m_a, dtype=complex) if a_init is None else np.asarray(a_init, dtype=complex).copy()
    b_hat = np.ones(m_b, dtype=complex) if b_init is None else np.asarray(b_init, dtype=complex).copy()

    power = np.abs(h_hat) ** 2
    cross_a = np.conj(h_hat) * pre.r3.T
    cross_b = np.conj(h_hat.T) * pre.r3

    flags = []
    trace = []
    for it in range(1, n_iter + 1):
        a_hat, b_hat, degenerate = _sweep(cross_a, cross_b, power, power.T, a_hat, b_hat)
        if degenerate and "degenerate_column" not in flags:
            flags.append("degenerate_column")
        if record_trace or record_objective:
            gamma_it = _gamma_projection(a_hat, z_hat, b_hat, pre.r4)
            obj = nls_objective(pre, h_hat, z_hat, a_hat, b_hat, gamma_it) if record_objective else None
            trace.append(TraceEntry(it, gamma=gamma_it, objective=obj))

    gamma_hat = trace[-1].gamma if trace else _gamma_projection(a_hat, z_hat, b_hat, pre.r4)
    return CalibrationEstimate(h_hat=h_hat, z_hat=z_hat, a_hat=a_hat, b_hat=b_hat,
                               gamma_hat=gamma_hat, trace=trace, flags=tuple(flags))
