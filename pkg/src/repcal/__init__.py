"""Reciprocity calibration of dual-antenna repeaters in TDD MIMO.

Simulates bidirectional pilot measurements through a non-reciprocal
amplify-and-forward repeater and estimates the forward/reverse gain ratio
with least-squares and Bayesian MMSE calibrators.
"""

from .aonls import aonls_calibrate
from .denoise import CirclePrior, DenoiseResult, posterior_mse_identity_check, von_mises_denoise
from .estimators import AlternatingNlsCalibrator, MmseCalibrator, NlsCalibrator
from .harness import (ResultRow, SweepSpec, bench_complexity, emit_csv, emit_svg_plot,
                      read_csv_rows, rmse, run_iter_sweep, run_snr_sweep)
from .mathkit import (RankOneFactors, bessel_ratio, dft_column, kron, rank_one_approx,
                      sample_matrix_gaussian, unvec, vec)
from .mmse import MmseConfig, estimate_gamma, mmse_calibrate, mom_gamma_magnitude, update_a, update_b
from .nls import nls_calibrate
from .preprocess import NoiseStatistics, PreprocessedSet, preprocess
from .results import CalibrationError, CalibrationEstimate, TraceEntry, nls_objective
from .scenario import (GroundTruth, KroneckerNoise, MeasurementSet, ScenarioConfig,
                       draw_ground_truth, forward_channel, generate_measurements,
                       reverse_channel, trial_rng)

__all__ = [
    "AlternatingNlsCalibrator",
    "CalibrationError",
    "CalibrationEstimate",
    "CirclePrior",
    "DenoiseResult",
    "GroundTruth",
    "KroneckerNoise",
    "MeasurementSet",
    "MmseCalibrator",
    "MmseConfig",
    "NlsCalibrator",
    "NoiseStatistics",
    "PreprocessedSet",
    "RankOneFactors",
    "ResultRow",
    "ScenarioConfig",
    "SweepSpec",
    "TraceEntry",
    "aonls_calibrate",
    "bench_complexity",
    "bessel_ratio",
    "dft_column",
    "draw_ground_truth",
    "emit_csv",
    "emit_svg_plot",
    "estimate_gamma",
    "forward_channel",
    "generate_measurements",
    "kron",
    "mmse_calibrate",
    "mom_gamma_magnitude",
    "nls_calibrate",
    "nls_objective",
    "posterior_mse_identity_check",
    "preprocess",
    "rank_one_approx",
    "read_csv_rows",
    "reverse_channel",
    "rmse",
    "run_iter_sweep",
    "run_snr_sweep",
    "sample_matrix_gaussian",
    "trial_rng",
    "unvec",
    "update_a",
    "update_b",
    "vec",
    "von_mises_denoise",
]

__version__ = "0.1.0"
