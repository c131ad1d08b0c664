"""Numerical kernels shared by the calibration estimators.

Modified-Bessel ratio, dominant rank-one factorization by power iteration,
DFT columns, matrix-variate complex Gaussian sampling with separable
(Kronecker) covariance, and vec/kron helpers.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import i0e, i1e

from .validation import as_complex_matrix, psd_factor


def bessel_ratio(x):
    """Ratio I1(x)/I0(x) of modified Bessel functions of the first kind.

    Evaluated through the exponentially scaled Bessel functions, so the
    ratio stays finite far beyond the overflow point of I0 and I1
    themselves (arguments scale with SNR and routinely exceed 1e4).
    Accepts scalars or arrays; output lies in [0, 1), increasing in x,
    approaching 1 - 1/(2x) for large arguments.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("bessel_ratio requires finite arguments")
    if np.any(arr < 0):
        raise ValueError("bessel_ratio requires nonnegative arguments")
    out = i1e(arr) / i0e(arr)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass
class RankOneFactors:
    """Dominant singular triplet of a matrix, phase-normalized.

    `left` and `right` are unit vectors and `scale >= 0`;
    ``reconstruct() == scale * outer(left, right)`` approximates the input.
    The largest-magnitude entry of `left` is rotated to be real nonnegative.
    """

    left: np.ndarray
    right: np.ndarray
    scale: float
    converged: bool = True

    def reconstruct(self):
        return self.scale * np.outer(self.left, self.right)


def rank_one_approx(m, max_iters=200, tol=1e-10):
    """Best rank-one approximation via power iteration on m^H m.

    Stops when the relative change of the dominant eigenvalue estimate
    falls below `tol`; a deterministic start vector makes repeated runs
    bit-identical. An all-zero input yields scale 0 with canonical basis
    vectors; hitting `max_iters` returns the best iterate with
    ``converged=False``.
    """
    m = as_complex_matrix(m, "rank_one_approx input")
    rows, cols = m.shape
    if np.linalg.norm(m) == 0.0:
        left = np.zeros(rows, dtype=complex)
        right = np.zeros(cols, dtype=complex)
        left[0] = 1.0
        right[0] = 1.0
        return RankOneFactors(left, right, 0.0, True)

    # Canonical e1 plus a fixed complex perturbation so structured inputs
    # cannot start orthogonal to the dominant singular vector.
    v = np.zeros(cols, dtype=complex)
    v[0] = 1.0
    v += 1e-3 * np.exp(1j * 0.6180339887498949 * np.arange(cols))
    v /= np.linalg.norm(v)

    lam_prev = 0.0
    converged = False
    for _ in range(max_iters):
        w = m @ v
        lam = float(np.real(np.vdot(w, w)))
        bv = m.conj().T @ w
        nbv = np.linalg.norm(bv)
        if nbv == 0.0:
            # started inside the null space; restart from a flat vector
            v = np.full(cols, 1.0 / np.sqrt(cols), dtype=complex)
            continue
        v = bv / nbv
        if abs(lam - lam_prev) <= tol * max(lam, np.finfo(float).tiny):
            converged = True
            break
        lam_prev = lam

    w = m @ v
    scale = float(np.linalg.norm(w))
    if scale == 0.0:
        left = np.zeros(rows, dtype=complex)
        right = np.zeros(cols, dtype=complex)
        left[0] = 1.0
        right[0] = 1.0
        return RankOneFactors(left, right, 0.0, converged)
    u = w / scale
    peak = u[np.argmax(np.abs(u))]
    phase = peak / abs(peak)
    u = u * np.conj(phase)
    v = v * np.conj(phase)
    return RankOneFactors(u, np.conj(v), scale, converged)


def dft_column(m, k):
    """Column k of the unitary m-point DFT matrix (unit Euclidean norm)."""
    m = int(m)
    k = int(k)
    if m < 1:
        raise ValueError("DFT size must be positive")
    if not 0 <= k < m:
        raise ValueError(f"column index {k} out of range for size {m}")
    return np.exp(-2j * np.pi * np.arange(m) * k / m) / np.sqrt(m)


def sample_matrix_gaussian(rows, cols, row_cov, col_cov, rng):
    """Draw a complex Gaussian matrix with separable covariance.

    `row_cov` (spatial, rows x rows) and `col_cov` (temporal, cols x cols)
    are Hermitian PSD; the stacked columns satisfy
    ``cov(vec(W)) = col_cov kron row_cov``. Scaled-identity factors reduce
    to i.i.d. circularly symmetric entries.
    """
    rows = int(rows)
    cols = int(cols)
    l_row = psd_factor(row_cov, "row covariance")
    l_col = psd_factor(col_cov, "column covariance")
    if l_row.shape[0] != rows or l_col.shape[0] != cols:
        raise ValueError("covariance sizes do not match the requested shape")
    w0 = (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2)
    return l_row @ w0 @ l_col.T


def vec(m):
    """Stack the columns of a matrix into one vector."""
    return np.asarray(m).reshape(-1, order="F")


def unvec(v, shape):
    """Inverse of `vec` for the given (rows, cols) shape."""
    return np.asarray(v).reshape(shape, order="F")


def kron(a, b):
    """Kronecker product (thin alias kept next to the vec identity)."""
    return np.kron(a, b)
