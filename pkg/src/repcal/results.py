"""Shared result containers and the least-squares objective."""

from dataclasses import dataclass, field

import numpy as np


class CalibrationError(ValueError):
    """Raised when an estimate is undefined for the given observations."""


@dataclass
class TraceEntry:
    """Per-iteration snapshot: gain-ratio estimate and/or objective value."""

    iteration: int
    gamma: complex | None = None
    objective: float | None = None


@dataclass
class CalibrationEstimate:
    """Output of one calibration run.

    a_hat and b_hat hold the diagonals of the estimated transceiver-ratio
    matrices. mse_a, mse_b and mse_gamma are posterior mean-square errors,
    populated only by the Bayesian estimator. flags records degeneracies
    encountered along the way (empty on a clean run).
    """

    h_hat: np.ndarray
    z_hat: np.ndarray
    a_hat: np.ndarray
    b_hat: np.ndarray
    gamma_hat: complex
    trace: list = field(default_factory=list)
    mse_a: np.ndarray | None = None
    mse_b: np.ndarray | None = None
    mse_gamma: float | None = None
    flags: tuple = ()
    outer_passes: int | None = None


def combined_repeater_response(a_hat, z_hat, b_hat):
    """The m_a x m_b matrix diag(a_hat) @ z_hat.T @ diag(b_hat).

    This is the regressor multiplying the gain ratio in the reverse-link
    difference observation r4; it is invariant under the scalar ambiguity
    (c*a_hat, b_hat/c).
    """
    return a_hat[:, None] * z_hat.T * b_hat[None, :]


def nls_objective(pre, h_hat, z_hat, a_hat, b_hat, gamma_hat):
    """Sum of squared Frobenius residuals over the four observations."""
    f = np.linalg.norm(pre.r1 - h_hat) ** 2
    f += np.linalg.norm(pre.r2 - z_hat) ** 2
    f += np.linalg.norm(pre.r3 - a_hat[:, None] * h_hat.T * b_hat[None, :]) ** 2
    f += np.linalg.norm(pre.r4 - gamma_hat * combined_repeater_response(a_hat, z_hat, b_hat)) ** 2
    return float(f)


def estimate_objective(pre, est):
    """Objective evaluated at a CalibrationEstimate."""
    return nls_objective(pre, est.h_hat, est.z_hat, est.a_hat, est.b_hat, est.gamma_hat)
