"""Monte Carlo experiment driver: SNR sweeps, iteration sweeps, runtime
benchmarks, CSV/SVG emission.

All sweeps are paired: every selected algorithm sees the identical
measurement set in each trial, and per-trial generators derive from
(master_seed, grid_index, trial_index), so results are independent of the
number of workers and of execution order.
"""

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .aonls import aonls_calibrate
from .mmse import MmseConfig, mmse_calibrate
from .nls import nls_calibrate
from .preprocess import preprocess
from .results import CalibrationError
from .scenario import ScenarioConfig, draw_ground_truth, generate_measurements, trial_rng

CSV_HEADER = "snr_db,m_a,m_b,algorithm,n_iter,trials,rmse,mean_runtime_us,seed"

KNOWN_ALGORITHMS = ("nls", "aonls", "mmse")
BENCH_SIZES = ((4, 3), (8, 8), (32, 16), (64, 32))

# Fraction of failed (degenerate) trials tolerated before a sweep is
# declared a numerical failure.
FAILURE_THRESHOLD = 0.01

_SVG_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


class ConfigError(Exception):
    """Invalid sweep or CLI configuration."""


class NumericalFailureError(Exception):
    """Too many degenerate trials in one sweep."""


@dataclass
class SweepSpec:
    """Everything needed to reproduce one experiment run."""

    scenario: ScenarioConfig
    snr_grid_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    iter_grid: tuple = (1, 2, 4, 8, 16, 32, 64, 100)
    algorithms: tuple = ("nls", "aonls", "mmse")
    trials: int = 1000
    n_iter: int = 100
    aonls_max_outer: int = 20
    aonls_rel_tol: float = 1e-6
    mmse: MmseConfig = field(default_factory=MmseConfig)
    measure_runtime: bool = False
    output_path: str | None = None
    svg_path: str | None = None

    def validate(self):
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not self.snr_grid_db:
            raise ConfigError("snr_grid_db must not be empty")
        if not self.iter_grid:
            raise ConfigError("iter_grid must not be empty")
        if any(int(k) < 1 for k in self.iter_grid):
            raise ConfigError("iteration counts must be at least 1")
        if not self.algorithms:
            raise ConfigError("algorithms must not be empty")
        unknown = [a for a in self.algorithms if a not in KNOWN_ALGORITHMS]
        if unknown:
            raise ConfigError(f"unknown algorithms: {unknown}")
        if self.n_iter < 1:
            raise ConfigError("n_iter must be at least 1")
        return self


@dataclass
class ResultRow:
    """One aggregated data point of a sweep or benchmark."""

    snr_db: float
    m_a: int
    m_b: int
    algorithm: str
    n_iter: int
    trials: int
    rmse: float
    mean_runtime_us: float
    seed: int


def rmse(estimates, truths):
    """Root-mean-square error between gain-ratio estimates and truths."""
    estimates = np.asarray(estimates)
    truths = np.asarray(truths)
    if estimates.size == 0 or estimates.shape != truths.shape:
        raise ValueError("rmse requires equally sized, nonempty inputs")
    return float(np.sqrt(np.mean(np.abs(estimates - truths) ** 2)))


def worker_count():
    """CALIB_THREADS, or the hardware parallelism when unset."""
    env = os.environ.get("CALIB_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"CALIB_THREADS must be an integer, got {env!r}") from exc
    return os.cpu_count() or 1


def _map_trials(fn, n):
    workers = min(worker_count(), n)
    if workers <= 1:
        return [fn(t) for t in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))


def _runners(spec):
    return {
        "nls": lambda pre: nls_calibrate(pre, n_iter=spec.n_iter),
        "aonls": lambda pre: aonls_calibrate(pre, n_iter=spec.n_iter,
                                             max_outer=spec.aonls_max_outer,
                                             rel_tol=spec.aonls_rel_tol),
        "mmse": lambda pre: mmse_calibrate(pre, spec.mmse),
    }


def _draw_trial(cfg, spec, grid_index, trial_index):
    rng = trial_rng(cfg.master_seed, grid_index, trial_index)
    truth = draw_ground_truth(cfg, rng)
    meas = generate_measurements(truth, cfg, rng)
    pre = preprocess(meas, cfg.raw_noise_factors(), mode=spec.mmse.cov_mode)
    return truth, pre


def _aggregate(spec, results, snr_db, n_iter_of):
    """Reduce per-trial outcomes (fixed trial order) into ResultRows."""
    rows = []
    for name in spec.algorithms:
        err2 = np.array([r[name][0] for r in results])
        runtimes = np.array([r[name][1] for r in results])
        failed = np.array([r[name][2] for r in results])
        n_failed = int(failed.sum())
        if n_failed > FAILURE_THRESHOLD * len(results):
            raise NumericalFailureError(
                f"{name}: {n_failed}/{len(results)} degenerate trials at snr {snr_db}")
        mean_err = float(np.mean(err2[~failed]))
        mean_rt = float(np.mean(runtimes)) if spec.measure_runtime else 0.0
        rows.append(ResultRow(snr_db=float(snr_db), m_a=spec.scenario.m_a,
                              m_b=spec.scenario.m_b, algorithm=name,
                              n_iter=n_iter_of(name), trials=spec.trials,
                              rmse=float(np.sqrt(mean_err)), mean_runtime_us=mean_rt,
                              seed=spec.scenario.master_seed))
    return rows


def run_snr_sweep(spec):
    """RMSE of every selected algorithm over the SNR grid (paired trials)."""
    spec.validate()
    runners = _runners(spec)
    rows = []
    for si, snr in enumerate(spec.snr_grid_db):
        cfg = replace(spec.scenario, snr_db=float(snr))

        def trial(t, cfg=cfg, si=si):
            truth, pre = _draw_trial(cfg, spec, si, t)
            out = {}
            for name in spec.algorithms:
                start = time.perf_counter()
                try:
                    est = runners[name](pre)
                    err2 = abs(est.gamma_hat - truth.gain_ratio) ** 2
                    failed = False
                except CalibrationError:
                    err2, failed = np.nan, True
                out[name] = (err2, (time.perf_counter() - start) * 1e6, failed)
            return out

        results = _map_trials(trial, spec.trials)
        rows.extend(_aggregate(spec, results, snr,
                               lambda name: spec.mmse.n_iter if name == "mmse" else spec.n_iter))
    return rows


def run_iter_sweep(spec):
    """RMSE versus coefficient-iteration count at the scenario's fixed SNR.

    The least-squares algorithms are re-run per grid point; the Bayesian
    run executes once at the largest count and its per-iteration trace is
    read out, which is equivalent because sweeps do not depend on the
    iteration budget.
    """
    spec.validate()
    grid = [int(k) for k in spec.iter_grid]
    k_max = max(grid)
    cfg = spec.scenario
    mmse_cfg = replace(spec.mmse, n_iter=k_max)

    def trial(t):
        truth, pre = _draw_trial(cfg, spec, 0, t)
        out = {}
        for name in spec.algorithms:
            start = time.perf_counter()
            try:
                if name == "mmse":
                    est = mmse_calibrate(pre, mmse_cfg, record_trace=True)
                    gammas = {k: est.trace[k - 1].gamma for k in grid}
                elif name == "nls":
                    gammas = {k: nls_calibrate(pre, n_iter=k).gamma_hat for k in grid}
                else:
                    gammas = {k: aonls_calibrate(pre, n_iter=k,
                                                 max_outer=spec.aonls_max_outer,
                                                 rel_tol=spec.aonls_rel_tol).gamma_hat
                              for k in grid}
                err2 = {k: abs(g - truth.gain_ratio) ** 2 for k, g in gammas.items()}
                failed = False
            except CalibrationError:
                err2, failed = {k: np.nan for k in grid}, True
            out[name] = (err2, (time.perf_counter() - start) * 1e6, failed)
        return out

    results = _map_trials(trial, spec.trials)
    rows = []
    for k in grid:
        per_k = [{name: (r[name][0][k] if not r[name][2] else np.nan,
                         r[name][1], r[name][2]) for name in spec.algorithms}
                 for r in results]
        rows.extend(_aggregate(spec, per_k, cfg.snr_db, lambda name, k=k: k))
    return rows


def format_row(r):
    """One CSV line for a ResultRow; repr keeps floats round-trippable."""
    return (f"{r.snr_db!r},{r.m_a},{r.m_b},{r.algorithm},{r.n_iter},"
            f"{r.trials},{r.rmse!r},{r.mean_runtime_us!r},{r.seed}")


def emit_csv(rows, path):
    """Write rows with the fixed header; field formatting is deterministic."""
    if not rows:
        raise ValueError("emit_csv requires at least one row")
    lines = [CSV_HEADER] + [format_row(r) for r in rows]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv_rows(path):
    """Parse a CSV written by emit_csv back into ResultRows."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("unrecognized CSV header")
    rows = []
    for line in lines[1:]:
        f = line.split(",")
        rows.append(ResultRow(snr_db=float(f[0]), m_a=int(f[1]), m_b=int(f[2]),
                              algorithm=f[3], n_iter=int(f[4]), trials=int(f[5]),
                              rmse=float(f[6]), mean_runtime_us=float(f[7]),
                              seed=int(f[8])))
    return rows


def emit_svg_plot(rows, path, x_field="snr_db", x_label=None, title=None):
    """Self-contained SVG line chart, log-scaled RMSE, one line per algorithm."""
    if not rows:
        raise ValueError("emit_svg_plot requires at least one row")
    x_label = x_label or {"snr_db": "SNR [dB]", "n_iter": "iterations"}.get(x_field, x_field)
    title = title or "gain-ratio RMSE"

    series = {}
    for r in rows:
        series.setdefault(r.algorithm, []).append((float(getattr(r, x_field)), max(r.rmse, 1e-16)))
    for pts in series.values():
        pts.sort(key=lambda p: p[0])

    xs = [p[0] for pts in series.values() for p in pts]
    ys = [p[1] for pts in series.values() for p in pts]
    x_lo, x_hi = min(xs), max(xs)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    k_lo = int(np.floor(np.log10(min(ys))))
    k_hi = int(np.ceil(np.log10(max(ys))))
    if k_hi == k_lo:
        k_hi += 1

    width, height = 640, 420
    ml, mr, mt, mb = 70, 20, 36, 46
    px = lambda x: ml + (x - x_lo) / (x_hi - x_lo) * (width - ml - mr)
    py = lambda y: height - mb - (np.log10(y) - k_lo) / (k_hi - k_lo) * (height - mt - mb)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>']
    for k in range(k_lo, k_hi + 1):
        y = py(10.0 ** k)
        parts.append(f'<line x1="{ml}" y1="{y:.1f}" x2="{width - mr}" y2="{y:.1f}" '
                     f'stroke="#dddddd"/>')
        parts.append(f'<text x="{ml - 6}" y="{y + 4:.1f}" text-anchor="end">1e{k}</text>')
    for x in sorted({p[0] for pts in series.values() for p in pts}):
        parts.append(f'<text x="{px(x):.1f}" y="{height - mb + 18}" text-anchor="middle">{x:g}</text>')
    parts.append(f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" stroke="black"/>')
    parts.append(f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" y2="{height - mb}" '
                 f'stroke="black"/>')
    parts.append(f'<text x="{(ml + width - mr) / 2:.1f}" y="{height - 8}" '
                 f'text-anchor="middle">{x_label}</text>')

    for idx, (name, pts) in enumerate(series.items()):
        color = _SVG_PALETTE[idx % len(_SVG_PALETTE)]
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts)
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{coords}"/>')
        ly = mt + 16 * idx + 8
        parts.append(f'<line x1="{width - mr - 110}" y1="{ly}" x2="{width - mr - 86}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="1.8"/>')
        parts.append(f'<text x="{width - mr - 80}" y="{ly + 4}">{name}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")


def bench_complexity(spec):
    """Mean per-trial runtime of each algorithm across the benchmark sizes.

    The Bayesian estimator runs in both covariance modes (reported as
    mmse_diag and mmse_full). All algorithms are timed interleaved within
    each trial so background load perturbs their means symmetrically;
    full-covariance trials are reduced at the larger sizes, where a single
    gain-ratio whitening solve dominates. Each size gets one untimed
    warmup trial.
    """
    spec.validate()
    rows = []
    for size_index, (m_a, m_b) in enumerate(BENCH_SIZES):
        cfg = replace(spec.scenario, m_a=m_a, m_b=m_b)
        runners = {
            "nls": ("diagonal", lambda pre: nls_calibrate(pre, n_iter=spec.n_iter)),
            "aonls": ("diagonal", lambda pre: aonls_calibrate(pre, n_iter=spec.n_iter,
                                                              max_outer=spec.aonls_max_outer,
                                                              rel_tol=spec.aonls_rel_tol)),
            "mmse_diag": ("diagonal",
                          lambda pre: mmse_calibrate(pre, replace(spec.mmse, cov_mode="diagonal"))),
            "mmse_full": ("full",
                          lambda pre: mmse_calibrate(pre, replace(spec.mmse, cov_mode="full"))),
        }
        n_full = spec.trials
        if m_a * m_b >= 512:
            n_full = max(2, spec.trials // 5)
        err2 = {name: [] for name in runners}
        elapsed = {name: [] for name in runners}
        for t in range(-1, spec.trials):
            rng = trial_rng(cfg.master_seed, size_index, max(t, 0))
            truth = draw_ground_truth(cfg, rng)
            meas = generate_measurements(truth, cfg, rng)
            pre = {mode: preprocess(meas, cfg.raw_noise_factors(), mode=mode)
                   for mode in ("diagonal", "full")}
            for name, (noise_mode, run) in runners.items():
                if name == "mmse_full" and t >= n_full:
                    continue
                start = time.perf_counter()
                est = run(pre[noise_mode])
                stop = time.perf_counter()
                if t < 0:
                    continue  # warmup
                elapsed[name].append((stop - start) * 1e6)
                err2[name].append(abs(est.gamma_hat - truth.gain_ratio) ** 2)
        for name in runners:
            rows.append(ResultRow(snr_db=cfg.snr_db, m_a=m_a, m_b=m_b, algorithm=name,
                                  n_iter=spec.mmse.n_iter if name.startswith("mmse") else spec.n_iter,
                                  trials=len(err2[name]), rmse=float(np.sqrt(np.mean(err2[name]))),
                                  mean_runtime_us=float(np.mean(elapsed[name])),
                                  seed=cfg.master_seed))
    return rows
