"""Estimator-style wrappers around the calibration algorithms.

Each calibrator follows the familiar fit/get_params protocol: constructor
arguments are hyperparameters, ``fit`` consumes a PreprocessedSet and
stores the results in trailing-underscore attributes, returning self.
"""

from sklearn.base import BaseEstimator

from .aonls import aonls_calibrate
from .mmse import MmseConfig, mmse_calibrate
from .nls import nls_calibrate
from .preprocess import PreprocessedSet


class _CalibratorMixin:
    def _store(self, estimate):
        self.estimate_ = estimate
        self.gamma_ = estimate.gamma_hat
        self.h_hat_ = estimate.h_hat
        self.z_hat_ = estimate.z_hat
        self.a_hat_ = estimate.a_hat
        self.b_hat_ = estimate.b_hat
        self.trace_ = estimate.trace
        self.flags_ = estimate.flags
        return self

    @staticmethod
    def _check_input(X):
        if not isinstance(X, PreprocessedSet):
            raise TypeError("fit expects a PreprocessedSet of calibration observations")
        return X


class NlsCalibrator(_CalibratorMixin, BaseEstimator):
    """Stepwise nonlinear least-squares calibration."""

    def __init__(self, n_iter=100, record_trace=False, record_objective=False):
        self.n_iter = n_iter
        self.record_trace = record_trace
        self.record_objective = record_objective

    def fit(self, X, y=None):
        X = self._check_input(X)
        return self._store(nls_calibrate(X, n_iter=self.n_iter,
                                         record_trace=self.record_trace,
                                         record_objective=self.record_objective))


class AlternatingNlsCalibrator(_CalibratorMixin, BaseEstimator):
    """Least-squares calibration refined by alternating optimization."""

    def __init__(self, n_iter=100, max_outer=20, rel_tol=1e-6):
        self.n_iter = n_iter
        self.max_outer = max_outer
        self.rel_tol = rel_tol

    def fit(self, X, y=None):
        X = self._check_input(X)
        return self._store(aonls_calibrate(X, n_iter=self.n_iter,
                                           max_outer=self.max_outer,
                                           rel_tol=self.rel_tol))


class MmseCalibrator(_CalibratorMixin, BaseEstimator):
    """Bayesian MMSE calibration with unit-circle coefficient priors."""

    def __init__(self, n_iter=100, cov_mode="diagonal", phi_gamma="mom",
                 damping=1.0, record_trace=False):
        self.n_iter = n_iter
        self.cov_mode = cov_mode
        self.phi_gamma = phi_gamma
        self.damping = damping
        self.record_trace = record_trace

    def fit(self, X, y=None):
        X = self._check_input(X)
        cfg = MmseConfig(n_iter=self.n_iter, cov_mode=self.cov_mode,
                         phi_gamma_mode=self.phi_gamma, damping=self.damping)
        est = mmse_calibrate(X, cfg, record_trace=self.record_trace)
        self._store(est)
        self.mse_a_ = est.mse_a
        self.mse_b_ = est.mse_b
        self.mse_gamma_ = est.mse_gamma
        return self
