"""Input validation helpers shared by the estimators and the simulator."""

import numpy as np

HERMITIAN_TOL = 1e-12


def as_complex_matrix(x, name="matrix"):
    """Coerce to a 2-D complex ndarray with finite entries."""
    m = np.asarray(x, dtype=complex)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and column")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def as_complex_vector(x, name="vector"):
    v = np.asarray(x, dtype=complex)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def check_shape(m, shape, name="matrix"):
    if m.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {m.shape}")
    return m


def check_hermitian_psd(m, name="covariance", tol=HERMITIAN_TOL):
    """Validate a Hermitian positive-semidefinite descriptor.

    Hermitian symmetry is required within `tol` relative to the matrix
    scale; eigenvalues may dip slightly negative from rounding only.
    """
    m = as_complex_matrix(m, name)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got {m.shape}")
    scale = max(float(np.max(np.abs(m))), 1.0)
    if np.max(np.abs(m - m.conj().T)) > tol * scale:
        raise ValueError(f"{name} is not Hermitian within {tol}")
    eigs = np.linalg.eigvalsh(m)
    if eigs.size and eigs[0] < -1e-10 * scale:
        raise ValueError(f"{name} is not positive semidefinite (min eig {eigs[0]:.3e})")
    return m


def psd_factor(m, name="covariance"):
    """Return L with L @ L.conj().T == m for a Hermitian PSD matrix."""
    m = check_hermitian_psd(m, name)
    vals, vecs = np.linalg.eigh(m)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))[None, :]
