"""Command-line interface.

Subcommands
-----------
phase1     estimate in-control parameters from a Phase I CSV
chart      run the Phase II chart against stored parameters
selfstart  unified Phase I + self-starting Phase II monitoring
simulate   run a declarative ARL experiment from a JSON config
ecdf       empirical CDFs of the charting statistic by group

Exit codes: 0 = ran, 2 = signals present (chart/selfstart), 1 = error.
Report commands also render a PNG figure next to the delimited output
unless --no-plots is given.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from . import chart as _chart
from . import plots
from .core_stats import TraceEstimates, make_trace_estimates, sample_covariance, correlation
from .errors import ConfigError, DiagChartError
from .pipeline import (
    clean_frame,
    apply_transform,
    fit_transform,
    transform_from_json,
    transform_to_json,
)
from .robust import RobustConfig, rmdp_estimate
from .self_starting import init_state, run_stream, state_to_json
from .simulation import (
    RNG_ALGORITHM,
    ContaminationModel,
    Scenario,
    ShiftModel,
    correlation_sensitivity,
    derive_seed,
    learning_time_experiment,
    run_arl,
)

PARAMS_FORMAT_VERSION = 1


class _Parser(argparse.ArgumentParser):
    """argparse exits with code 2 on usage errors; the CLI contract
    reserves 2 for 'signals present', so map usage errors to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_common(p: argparse.ArgumentParser, out_required: bool = True):
    p.add_argument("--out", required=out_required, help="output path")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (required for randomized commands)")
    p.add_argument("--threads", type=int, default=1, help="worker processes for simulations")
    p.add_argument("--no-plots", action="store_true", help="skip figure rendering")


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _read_matrix_csv(path) -> pd.DataFrame:
    df = pd.read_csv(path)
    if df.shape[1] == 0:
        raise ConfigError("input", f"no columns in {path}")
    return df


def write_params(path, params: _chart.ProcessParameters, columns, extra: dict):
    doc = {
        "format_version": PARAMS_FORMAT_VERSION,
        "source": params.source,
        "p": params.p,
        "m_eff": params.traces.m_eff,
        "mu": params.mu.tolist(),
        "d_diag": params.d_diag.tolist(),
        "traces": {
            "tr2_hat": params.traces.tr2_hat,
            "tr3_hat": params.traces.tr3_hat,
            "tr4_hat": params.traces.tr4_hat,
            "c_pm": params.traces.c_pm,
        },
        "columns": [str(c) for c in columns],
    }
    doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2))


def read_params(path) -> tuple[_chart.ProcessParameters, list]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != PARAMS_FORMAT_VERSION:
        raise ConfigError("format_version", f"unsupported: {doc.get('format_version')}")
    for key in ("source", "mu", "d_diag", "traces"):
        if key not in doc:
            raise ConfigError(key, "missing from parameter file")
    t = doc["traces"]
    traces = TraceEstimates(
        p=len(doc["mu"]), m_eff=doc.get("m_eff"), tr2_hat=t["tr2_hat"],
        tr3_hat=t["tr3_hat"], tr4_hat=t.get("tr4_hat"), c_pm=t.get("c_pm", 1.0),
    )
    params = _chart.ProcessParameters(
        mu=np.asarray(doc["mu"], dtype=float),
        d_diag=np.asarray(doc["d_diag"], dtype=float),
        traces=traces, source=doc["source"],
    )
    return params, doc.get("columns", [])


def _select_columns(df: pd.DataFrame, columns) -> pd.DataFrame:
    if not columns:
        return df
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise ConfigError("columns", f"input is missing columns {missing}")
    return df[columns]


# ---------------------------------------------------------------- phase1

def cmd_phase1(args) -> int:
    df = _read_matrix_csv(args.input)
    report = None
    if args.clean:
        df, report = clean_frame(df, args.missing_threshold, args.variance_threshold)
    data = df.to_numpy(dtype=float)
    if not np.all(np.isfinite(data)):
        raise ConfigError("input", "non-finite values remain; use --clean to impute")

    model = None
    if args.normal_scores:
        model = fit_transform(data, columns=df.columns)
        data = apply_transform(model, data)

    extra = {
        "provenance": {
            "input": str(args.input),
            "robust": bool(args.robust),
            "alpha": args.alpha,
            "seed": args.seed,
            "cleaned": bool(args.clean),
            "missing_threshold": args.missing_threshold,
            "variance_threshold": args.variance_threshold,
            "normal_scores": bool(args.normal_scores),
            "rng_algorithm": RNG_ALGORITHM,
            "package_version": __version__,
            "created_utc": _utc_now(),
        }
    }
    if report is not None:
        extra["cleaning_report"] = report.to_dict()

    if args.robust:
        if args.seed is None:
            raise ConfigError("seed", "--seed is required with --robust")
        cfg = RobustConfig(
            n_starts=args.n_starts, outlier_alpha=args.outlier_alpha, seed=args.seed
        )
        est = rmdp_estimate(data, cfg)
        params = _chart.ProcessParameters(
            mu=est.mu_tilde, d_diag=est.d_tilde, traces=est.traces,
            source=_chart.SOURCE_ROBUST,
        )
        extra["outlier_flags"] = est.outlier_flags.astype(bool).tolist()
        extra["n_outliers"] = int(est.outlier_flags.sum())
    else:
        cov = sample_covariance(data)
        traces = make_trace_estimates(correlation(cov), data.shape[0])
        params = _chart.ProcessParameters(
            mu=data.mean(axis=0), d_diag=cov.d_s, traces=traces,
            source=_chart.SOURCE_CLASSICAL,
        )

    write_params(args.out, params, df.columns, extra)
    if model is not None and args.transform_out:
        Path(args.transform_out).write_text(transform_to_json(model))

    t = params.traces
    print(f"phase1: source={params.source} p={params.p} m_eff={t.m_eff}")
    print(f"phase1: tr2_hat={t.tr2_hat:.6g} tr3_hat={t.tr3_hat:.6g} c_pm={t.c_pm:.6g}")
    if report is not None:
        print(f"phase1: cleaning kept {report.cols_out}/{report.cols_in} columns "
              f"(dropped {len(report.dropped_missing)} missing, "
              f"{len(report.dropped_near_constant)} near-constant)")
    return 0


# ----------------------------------------------------------------- chart

def _points_frame(index, m2, u, z, signal, ucl) -> pd.DataFrame:
    return pd.DataFrame({
        "index": index, "m2": m2, "u": u, "z": z,
        "signal": signal.astype(int), "ucl": ucl,
    })


def cmd_chart(args) -> int:
    params, columns = read_params(args.params)
    df = _select_columns(_read_matrix_csv(args.phase2), columns)
    data = df.to_numpy(dtype=float)
    if data.shape[1] != params.p:
        raise ConfigError("phase2", f"expected {params.p} columns, got {data.shape[1]}")
    if args.transform:
        model = transform_from_json(Path(args.transform).read_text())
        data = apply_transform(model, data)

    config = _chart.ChartConfig(
        alpha=args.alpha, cf_order=args.cf_order,
        apply_correction=not args.no_correction,
    )
    m2, u, z, sig = _chart.evaluate_batch(data, params, config)
    ucl = _chart.control_limit(params, config)
    out_df = _points_frame(np.arange(1, data.shape[0] + 1), m2, u, z, sig,
                           np.full(data.shape[0], ucl))
    out_df.to_csv(args.out, index=False)
    if not args.no_plots:
        plot_df = out_df.assign(z_alpha=config.z_alpha)
        plots.save_chart_figure(plot_df, Path(args.out).with_suffix(".png"))
    n_sig = int(sig.sum())
    print(f"chart: {data.shape[0]} points, {n_sig} signals, ucl={ucl:.6g}")
    return 2 if n_sig else 0


# ------------------------------------------------------------- selfstart

def cmd_selfstart(args) -> int:
    phase1_df = _read_matrix_csv(args.phase1)
    report = None
    if args.clean:
        phase1_df, report = clean_frame(phase1_df, args.missing_threshold,
                                        args.variance_threshold)
    stream_df = _select_columns(_read_matrix_csv(args.stream), list(phase1_df.columns))
    if stream_df.shape[1] != phase1_df.shape[1]:
        raise ConfigError("stream", "column count differs from phase1")

    if args.robust and args.seed is None:
        raise ConfigError("seed", "--seed is required with --robust")
    config = _chart.ChartConfig(alpha=args.alpha, cf_order=args.cf_order,
                                apply_correction=not args.no_correction)
    robust_cfg = RobustConfig(seed=args.seed or 0) if args.robust else None
    state = init_state(
        phase1_df.to_numpy(dtype=float), config, robust=args.robust,
        robust_cfg=robust_cfg, refresh_every=args.refresh_every,
    )
    record = run_stream(state, stream_df.to_numpy(dtype=float))

    pts = record.points
    out_df = _points_frame(
        np.arange(1, len(pts) + 1),
        np.array([pt.m2 for pt in pts]),
        np.array([pt.u for pt in pts]),
        np.array([pt.z for pt in pts]),
        np.array([pt.signal for pt in pts]),
        np.array([pt.ucl for pt in pts]),
    )
    out_df["absorbed"] = (~out_df["signal"].astype(bool)).astype(int)
    out_df.to_csv(args.out, index=False)
    if not args.no_plots:
        plot_df = out_df.assign(z_alpha=config.z_alpha)
        plots.save_chart_figure(plot_df, Path(args.out).with_suffix(".png"),
                                title="Self-starting control chart")
    if args.state_out:
        Path(args.state_out).write_text(state_to_json(state))
    if record.first_signal is not None:
        print(f"selfstart: signal at stream index {record.first_signal} "
              f"(absorbed {state.j} observations total)")
        return 2
    print(f"selfstart: no signal in {len(pts)} observations "
          f"(absorbed {state.j} total)")
    return 0


# -------------------------------------------------------------- simulate

def _cfg_get(cfg: dict, field, default=None, required=False):
    if field in cfg:
        return cfg[field]
    if required:
        raise ConfigError(field, "missing required field")
    return default


def _shift_from_cfg(obj, field="shift"):
    if obj is None:
        return None
    if "delta" not in obj:
        raise ConfigError(f"{field}.delta", "missing required field")
    return ShiftModel(delta=float(obj["delta"]),
                      fraction=obj.get("fraction"),
                      coords=obj.get("coords"))


def _scenario_from_cfg(obj: dict, p_override=None) -> Scenario:
    if obj is None:
        raise ConfigError("scenario", "missing required field")
    p = p_override if p_override is not None else obj.get("p")
    if p is None:
        raise ConfigError("scenario.p", "missing required field")
    return Scenario(p=int(p), structure=obj.get("structure", "identity"),
                    a=float(obj.get("a", 0.0)))


def _run_simulate_config(cfg: dict, seed_override, threads: int) -> tuple[pd.DataFrame, dict]:
    experiment = _cfg_get(cfg, "experiment", default="arl")
    seed = seed_override if seed_override is not None else cfg.get("seed")
    if seed is None:
        raise ConfigError("seed", "give a seed in the config or via --seed")
    seed = int(seed)
    results = []

    if experiment == "arl":
        alpha = float(_cfg_get(cfg, "alpha", required=True))
        base = {
            "cf_order": int(_cfg_get(cfg, "cf_order", 1)),
            "apply_correction": bool(_cfg_get(cfg, "apply_correction", True)),
            "mode": _cfg_get(cfg, "mode", "known"),
            "phase1_size": int(_cfg_get(cfg, "phase1_size", 200)),
            "n_reps": int(_cfg_get(cfg, "n_reps", 10_000)),
            "max_len": _cfg_get(cfg, "max_len"),
        }
        shift = _shift_from_cfg(cfg.get("shift"))
        contamination = None
        if cfg.get("contamination") is not None:
            cobj = cfg["contamination"]
            contamination = ContaminationModel(
                rate=float(_cfg_get(cobj, "rate", required=True)),
                shift=_shift_from_cfg(cobj, field="contamination"),
            )
        grid = cfg.get("grid", {})
        p_values = grid.get("p", [None])
        alpha_values = grid.get("alpha", [alpha])
        order_values = grid.get("cf_order", [base["cf_order"]])
        point = 0
        for p in p_values:
            scenario = _scenario_from_cfg(cfg.get("scenario"), p_override=p)
            for a in alpha_values:
                for order in order_values:
                    res = run_arl(
                        scenario, alpha=float(a), cf_order=int(order),
                        apply_correction=base["apply_correction"], shift=shift,
                        mode=base["mode"], phase1_size=base["phase1_size"],
                        contamination=contamination, n_reps=base["n_reps"],
                        max_len=base["max_len"],
                        seed=derive_seed(seed, point), threads=threads,
                    )
                    res.descriptors["grid_point"] = point
                    results.append(res)
                    point += 1
    elif experiment == "correlation_sensitivity":
        results = correlation_sensitivity(
            p_grid=_cfg_get(cfg, "p_grid", required=True),
            a_grid=_cfg_get(cfg, "a_grid", required=True),
            alpha=float(_cfg_get(cfg, "alpha", required=True)),
            n_reps=int(_cfg_get(cfg, "n_reps", 10_000)),
            seed=seed, cf_order=int(_cfg_get(cfg, "cf_order", 1)),
            max_len=_cfg_get(cfg, "max_len"), threads=threads,
        )
    elif experiment == "learning_time":
        results = learning_time_experiment(
            p_grid=_cfg_get(cfg, "p_grid", required=True),
            tau_grid=_cfg_get(cfg, "tau_grid", required=True),
            eta_target=float(_cfg_get(cfg, "eta_target", required=True)),
            alpha=float(_cfg_get(cfg, "alpha", required=True)),
            n_reps=int(_cfg_get(cfg, "n_reps", 1000)),
            seed=seed,
            structure=_cfg_get(cfg, "structure", "identity"),
            a=float(_cfg_get(cfg, "a", 0.0)),
            phase1_size=int(_cfg_get(cfg, "phase1_size", 20)),
            cf_order=int(_cfg_get(cfg, "cf_order", 1)),
            max_post=_cfg_get(cfg, "max_post"),
            prealarm=_cfg_get(cfg, "prealarm", "ignore"),
        )
    else:
        raise ConfigError("experiment", f"unknown experiment {experiment!r}")

    rows = []
    for res in results:
        row = dict(res.descriptors)
        row.update(arl_hat=res.arl_hat, std_err=res.std_err, n_reps=res.n_reps,
                   censored=res.censored, skipped=res.skipped, seed=res.seed,
                   wall_time=round(res.wall_time, 3))
        rows.append(row)
    frame = pd.DataFrame(rows)
    manifest = {
        "format_version": 1,
        "experiment": experiment,
        "config": cfg,
        "root_seed": seed,
        "rng_algorithm": RNG_ALGORITHM,
        "package_version": __version__,
        "created_utc": _utc_now(),
        "n_points": len(results),
        "wall_time_total": round(sum(r.wall_time for r in results), 3),
    }
    return frame, manifest


def cmd_simulate(args) -> int:
    try:
        cfg = json.loads(Path(args.config).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"not valid JSON: {exc}") from exc
    frame, manifest = _run_simulate_config(cfg, args.seed, args.threads)
    frame.to_csv(args.out, index=False)
    manifest["results_csv"] = str(args.out)
    manifest_path = Path(args.out).with_suffix(".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2))
    if not args.no_plots and len(frame):
        fig_path = Path(args.out).with_suffix(".png")
        if manifest["experiment"] == "learning_time":
            plots.save_learning_curve_figure(frame, fig_path)
        else:
            plots.save_arl_grid_figure(frame, fig_path)
    print(f"simulate: {len(frame)} grid points -> {args.out} "
          f"({manifest['wall_time_total']:.1f}s)")
    return 0


# ------------------------------------------------------------------ ecdf

def _ecdf_at(sorted_values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    if sorted_values.size == 0:
        return np.full(grid.size, np.nan)
    return np.searchsorted(sorted_values, grid, side="right") / sorted_values.size


def cmd_ecdf(args) -> int:
    from .cornish_fisher import normal_cdf

    df = pd.read_csv(args.chart_csv)
    if args.column not in df.columns:
        raise ConfigError("column", f"{args.column!r} not in {list(df.columns)}")
    values = df[args.column].to_numpy(dtype=float)
    if args.labels:
        lab = pd.read_csv(args.labels).iloc[:, 0].to_numpy()
        if lab.size != values.size:
            raise ConfigError("labels", f"{lab.size} labels for {values.size} rows")
        in_b = lab.astype(bool)
    else:
        if "signal" not in df.columns:
            raise ConfigError("labels", "no labels file and no signal column")
        in_b = df["signal"].to_numpy().astype(bool)
    group_a = np.sort(values[~in_b])
    group_b = np.sort(values[in_b])
    grid = np.unique(values)
    out = pd.DataFrame({
        "value": grid,
        "ecdf_group_a": _ecdf_at(group_a, grid),
        "ecdf_group_b": _ecdf_at(group_b, grid),
        "normal_cdf": [normal_cdf(v) for v in grid],
    })
    out.to_csv(args.out, index=False)
    if not args.no_plots:
        plots.save_ecdf_figure(out, Path(args.out).with_suffix(".png"))
    print(f"ecdf: {grid.size} support points "
          f"(group A n={group_a.size}, group B n={group_b.size})")
    return 0


# ------------------------------------------------------------------ main

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="diagchart",
                     description="High-dimensional diagonal-scaled control charting")
    parser.add_argument("--version", action="version", version=f"diagchart {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p1 = sub.add_parser("phase1", parents=[], help="estimate Phase I parameters")
    p1.add_argument("input", help="Phase I CSV (header row required)")
    p1.add_argument("--robust", action="store_true", help="robust estimation")
    p1.add_argument("--alpha", type=float, default=0.005)
    p1.add_argument("--outlier-alpha", type=float, default=0.005)
    p1.add_argument("--n-starts", type=int, default=50)
    p1.add_argument("--clean", action="store_true", help="run the cleaning pass")
    p1.add_argument("--missing-threshold", type=float, default=0.05)
    p1.add_argument("--variance-threshold", type=float, default=1e-6)
    p1.add_argument("--normal-scores", action="store_true",
                    help="fit and apply the normal-score transform")
    p1.add_argument("--transform-out", help="where to save the fitted transform")
    _add_common(p1)
    p1.set_defaults(func=cmd_phase1)

    p2 = sub.add_parser("chart", help="Phase II chart from stored parameters")
    p2.add_argument("params", help="parameter JSON from phase1")
    p2.add_argument("phase2", help="Phase II CSV")
    p2.add_argument("--alpha", type=float, default=0.005)
    p2.add_argument("--cf-order", type=int, default=1, choices=(0, 1, 2))
    p2.add_argument("--no-correction", action="store_true",
                    help="drop the finite-sample c_pm correction")
    p2.add_argument("--transform", help="normal-score transform JSON to apply")
    _add_common(p2)
    p2.set_defaults(func=cmd_chart)

    p3 = sub.add_parser("selfstart", help="self-starting monitoring")
    p3.add_argument("phase1", help="Phase I CSV")
    p3.add_argument("stream", help="Phase II stream CSV")
    p3.add_argument("--alpha", type=float, default=0.005)
    p3.add_argument("--cf-order", type=int, default=1, choices=(0, 1, 2))
    p3.add_argument("--no-correction", action="store_true")
    p3.add_argument("--robust", action="store_true")
    p3.add_argument("--refresh-every", type=int, default=1)
    p3.add_argument("--clean", action="store_true")
    p3.add_argument("--missing-threshold", type=float, default=0.05)
    p3.add_argument("--variance-threshold", type=float, default=1e-6)
    p3.add_argument("--state-out", help="write the final state snapshot JSON here")
    _add_common(p3)
    p3.set_defaults(func=cmd_selfstart)

    p4 = sub.add_parser("simulate", help="run a declarative ARL experiment")
    p4.add_argument("config", help="experiment config JSON")
    _add_common(p4)
    p4.set_defaults(func=cmd_simulate)

    p5 = sub.add_parser("ecdf", help="group ECDFs of the charting statistic")
    p5.add_argument("chart_csv", help="output CSV of the chart command")
    p5.add_argument("--column", default="z", help="statistic column (default z)")
    p5.add_argument("--labels", help="CSV with one 0/1 column defining group B")
    _add_common(p5)
    p5.set_defaults(func=cmd_ecdf)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DiagChartError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
