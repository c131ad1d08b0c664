"""Command-line front end.

Subcommands: sweep-snr, sweep-iters, bench, and single (one trial with all
intermediate matrices dumped). Options can come from a plain key=value
config file (# comments allowed) with command-line flags taking
precedence. Exit codes: 0 success, 2 configuration error, 3 numerical
failure, 4 I/O error.
"""

import argparse
import sys
from dataclasses import replace

import numpy as np

from .aonls import aonls_calibrate
from .harness import (CSV_HEADER, ConfigError, NumericalFailureError, SweepSpec,
                      bench_complexity, emit_csv, emit_svg_plot, format_row,
                      run_iter_sweep, run_snr_sweep)
from .mmse import MmseConfig, mmse_calibrate
from .nls import nls_calibrate
from .preprocess import preprocess
from .scenario import ScenarioConfig, draw_ground_truth, generate_measurements, trial_rng

_SCENARIO_KEYS = {"m_a", "m_b", "alpha_gain_db", "beta_gain_db", "snr_db",
                  "amplitude_error_std", "master_seed", "seed"}
_SWEEP_KEYS = {"trials", "n_iter", "algorithms", "snr_grid_db", "iter_grid",
               "cov_mode", "phi_gamma", "damping", "mmse_n_iter",
               "aonls_max_outer", "aonls_rel_tol", "timing", "out", "svg"}


def parse_config_file(path):
    """Read a key=value config file into a flat dict of strings."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _SCENARIO_KEYS | _SWEEP_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value
    return values


def _get(values, key, cast, default):
    if key not in values or values[key] is None:
        return default
    try:
        return cast(values[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {values[key]!r}") from exc


def _float_list(text):
    return tuple(float(x) for x in str(text).split(",") if x.strip())


def _int_list(text):
    return tuple(int(x) for x in str(text).split(",") if x.strip())


def _algorithms(text):
    return tuple(a.strip() for a in str(text).split(",") if a.strip())


def _phi_gamma(text):
    text = str(text)
    if text in ("unity", "mom"):
        return text
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"phi_gamma must be unity, mom, or a number, got {text!r}") from exc


def build_spec(values):
    """Assemble a SweepSpec from merged config/CLI values."""
    seed = _get(values, "seed", int, None)
    if seed is None:
        seed = _get(values, "master_seed", int, 0)
    try:
        scenario = ScenarioConfig(
            m_a=_get(values, "m_a", int, 8),
            m_b=_get(values, "m_b", int, 8),
            alpha_gain_db=_get(values, "alpha_gain_db", float, 10.0),
            beta_gain_db=_get(values, "beta_gain_db", float, 10.0),
            snr_db=_get(values, "snr_db", float, 20.0),
            amplitude_error_std=_get(values, "amplitude_error_std", float, 0.0),
            master_seed=seed,
        )
        mmse_cfg = MmseConfig(
            n_iter=_get(values, "mmse_n_iter", int, _get(values, "n_iter", int, 100)),
            cov_mode=_get(values, "cov_mode", str, "diagonal"),
            phi_gamma_mode=_phi_gamma(values["phi_gamma"]) if values.get("phi_gamma") else "mom",
            damping=_get(values, "damping", float, 1.0),
        )
        spec = SweepSpec(
            scenario=scenario,
            snr_grid_db=_get(values, "snr_grid_db", _float_list, SweepSpec.snr_grid_db),
            iter_grid=_get(values, "iter_grid", _int_list, SweepSpec.iter_grid),
            algorithms=_get(values, "algorithms", _algorithms, SweepSpec.algorithms),
            trials=_get(values, "trials", int, 1000),
            n_iter=_get(values, "n_iter", int, 100),
            aonls_max_outer=_get(values, "aonls_max_outer", int, 20),
            aonls_rel_tol=_get(values, "aonls_rel_tol", float, 1e-6),
            mmse=mmse_cfg,
            measure_runtime=_get(values, "timing", lambda v: str(v).lower() in ("1", "true", "yes"),
                                 False),
            output_path=values.get("out"),
            svg_path=values.get("svg"),
        )
        return spec.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _add_common(parser):
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--m-a", dest="m_a", type=int)
    parser.add_argument("--m-b", dest="m_b", type=int)
    parser.add_argument("--snr-db", dest="snr_db", type=float)
    parser.add_argument("--trials", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--n-iter", dest="n_iter", type=int)
    parser.add_argument("--algorithms", help="comma-separated subset of nls,aonls,mmse")
    parser.add_argument("--cov-mode", dest="cov_mode", choices=("full", "diagonal"))
    parser.add_argument("--phi-gamma", dest="phi_gamma",
                        help="unity, mom, or a known |gamma|^2 value")
    parser.add_argument("--timing", action="store_true", default=None,
                        help="record measured runtimes in the output")
    parser.add_argument("--out", help="CSV output path")
    parser.add_argument("--svg", help="SVG plot output path")


def _merge_values(args):
    values = {}
    if args.config:
        values.update(parse_config_file(args.config))
    for key in ("m_a", "m_b", "snr_db", "trials", "seed", "n_iter", "algorithms",
                "cov_mode", "phi_gamma", "timing", "out", "svg",
                "snr_grid_db", "iter_grid"):
        arg = getattr(args, key, None)
        if arg is not None:
            values[key] = arg
    return values


def _emit(rows, spec, x_field):
    if spec.output_path:
        emit_csv(rows, spec.output_path)
    if spec.svg_path:
        emit_svg_plot(rows, spec.svg_path, x_field=x_field)
    if not spec.output_path:
        print(CSV_HEADER)
        for r in rows:
            print(format_row(r))


def _dump(label, matrix, out):
    out.append(f"--- {label} ---")
    out.append(np.array2string(np.asarray(matrix), precision=5, suppress_small=True,
                               max_line_width=120))


def run_single(spec):
    """One trial with every intermediate quantity printed."""
    cfg = spec.scenario
    rng = trial_rng(cfg.master_seed, 0, 0)
    truth = draw_ground_truth(cfg, rng)
    meas = generate_measurements(truth, cfg, rng)
    pre = preprocess(meas, cfg.raw_noise_factors(), mode=spec.mmse.cov_mode)

    out = []
    out.append(f"scenario: m_a={cfg.m_a} m_b={cfg.m_b} snr_db={cfg.snr_db} "
               f"seed={cfg.master_seed}")
    out.append(f"true gain ratio: {truth.gain_ratio:.6f}")
    _dump("direct channel", truth.direct, out)
    _dump("repeater channel to A", truth.rep_to_a, out)
    _dump("repeater channel to B", truth.rep_to_b, out)
    for label in ("x_ab0", "x_ba0", "x_ab1", "x_ba1"):
        _dump(label, getattr(meas, label), out)
    for label in ("r1", "r2", "r3", "r4"):
        _dump(label, getattr(pre, label), out)
    for name in spec.algorithms:
        if name == "nls":
            est = nls_calibrate(pre, n_iter=spec.n_iter)
        elif name == "aonls":
            est = aonls_calibrate(pre, n_iter=spec.n_iter, max_outer=spec.aonls_max_outer,
                                  rel_tol=spec.aonls_rel_tol)
        else:
            est = mmse_calibrate(pre, spec.mmse)
        out.append(f"=== {name} ===")
        out.append(f"gamma_hat = {est.gamma_hat:.6f}  "
                   f"|error| = {abs(est.gamma_hat - truth.gain_ratio):.3e}")
        _dump("a_hat", est.a_hat, out)
        _dump("b_hat", est.b_hat, out)
        if est.flags:
            out.append(f"flags: {', '.join(est.flags)}")
    text = "\n".join(out) + "\n"
    if spec.output_path:
        with open(spec.output_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text, end="")


def _print_bench(rows):
    print(f"{'size':>10} {'algorithm':>10} {'trials':>6} {'mean us/trial':>14} {'rmse':>10}")
    by_size = {}
    for r in rows:
        by_size.setdefault((r.m_a, r.m_b), {})[r.algorithm] = r
        print(f"{f'({r.m_a},{r.m_b})':>10} {r.algorithm:>10} {r.trials:>6} "
              f"{r.mean_runtime_us:>14.1f} {r.rmse:>10.4f}")
    print("\nruntime ratios per size:")
    for size, algs in by_size.items():
        if "nls" in algs and "mmse_diag" in algs and "mmse_full" in algs:
            d = algs["mmse_diag"].mean_runtime_us
            print(f"  {size}: mmse_diag/nls = {d / algs['nls'].mean_runtime_us:.2f}, "
                  f"mmse_full/mmse_diag = {algs['mmse_full'].mean_runtime_us / d:.2f}")


def main(argv=None):
    parser = argparse.ArgumentParser(prog="repcal",
                                     description="dual-antenna repeater reciprocity "
                                                 "calibration simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    p_snr = sub.add_parser("sweep-snr", help="RMSE vs SNR sweep")
    _add_common(p_snr)
    p_snr.add_argument("--snr-grid", dest="snr_grid_db", help="comma-separated SNR grid in dB")
    p_it = sub.add_parser("sweep-iters", help="RMSE vs iteration-count sweep")
    _add_common(p_it)
    p_it.add_argument("--iter-grid", dest="iter_grid", help="comma-separated iteration counts")
    p_bench = sub.add_parser("bench", help="per-trial runtime benchmark over array sizes")
    _add_common(p_bench)
    p_single = sub.add_parser("single", help="run one trial and dump intermediates")
    _add_common(p_single)
    args = parser.parse_args(argv)

    try:
        values = _merge_values(args)
        if args.command == "bench" and "trials" not in values:
            values["trials"] = 20
        spec = build_spec(values)
        if args.command == "sweep-snr":
            _emit(run_snr_sweep(spec), spec, "snr_db")
        elif args.command == "sweep-iters":
            _emit(run_iter_sweep(spec), spec, "n_iter")
        elif args.command == "bench":
            spec = replace(spec, measure_runtime=True)
            rows = bench_complexity(spec)
            if spec.output_path:
                emit_csv(rows, spec.output_path)
            _print_bench(rows)
        else:
            run_single(spec)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
