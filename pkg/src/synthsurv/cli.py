"""Command-line entry points: simulate, estimate, bootstrap, cox, km, bench.

Every subcommand writes its numeric results as CSV (floats at 17 significant
digits so outputs round-trip exactly), renders a matplotlib figure next to
them, and records a manifest with the full configuration, seeds, input
digests, and output list. Runs are deterministic given (inputs, config,
seed). Exit codes: 0 success, 1 computation failure, 2 usage or config
error, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, cox, km, metrics, plots, simulate, synth
from .errors import EstimationError, SynthsurvError
from .manifest import RunManifest
from .panel import DonorPool, load_csv, write_csv


class ConfigError(ValueError):
    pass


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _write_csv(path: Path, header: list[str], rows) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])
    return path


def _write_long(path: Path, series: dict[str, tuple[np.ndarray, np.ndarray]]) -> Path:
    rows = []
    for name, (t, values) in series.items():
        rows.extend((float(ti), name, float(vi)) for ti, vi in zip(t, values))
    return _write_csv(path, ["t", "series", "value"], rows)


def _read_json_config(path: str, allowed: dict) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON in {path}: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    if raw.get("version") != 1:
        raise ConfigError(f"{path}: config must declare \"version\": 1")
    unknown = set(raw) - set(allowed) - {"version"}
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    config = {}
    for key, default in allowed.items():
        config[key] = raw.get(key, default)
    return config


_DGP_KEYS = {
    "model": "cox",
    "n_units": 20,
    "r": 4,
    "k": 700,
    "lambda": 0.05,
    "target_censoring": 0.10,
    "censoring_tolerance": 0.01,
    "seed": 1,
}


def _dgp_config(raw: dict) -> simulate.DGPConfig:
    try:
        return simulate.DGPConfig(
            model=raw["model"],
            n_units=int(raw["n_units"]),
            r=int(raw["r"]),
            k=int(raw["k"]),
            lam=float(raw["lambda"]),
            target_censoring=float(raw["target_censoring"]),
            censoring_tolerance=float(raw["censoring_tolerance"]),
            seed=int(raw["seed"]),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid simulation config: {e}") from None


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    raw = _read_json_config(args.config, _DGP_KEYS)
    if args.seed is not None:
        raw["seed"] = args.seed
    config = _dgp_config(raw)
    out = _out_dir(args)
    manifest = RunManifest(out, "simulate", raw, __version__, inputs=[args.config])
    panel = simulate.generate_panel(config)
    outputs = []

    panel_path = out / "panel.csv"
    write_csv(panel.data, panel_path)
    outputs.append(panel_path)

    grid = synth.make_grid(panel.data)
    header = ["t"] + [f"{u}_p{p}" for u in panel.data.units for p in (0, 1)]
    rows = []
    for i, t in enumerate(grid.timestamps):
        row = [float(t)]
        for u in panel.data.units:
            for p in (0, 1):
                row.append(float(panel.truth[(p, u)](t)))
        rows.append(row)
    outputs.append(_write_csv(out / "truth.csv", header, rows))

    if not args.no_plots:
        shown = {f"{u}_p{p}": panel.truth[(p, u)](grid.timestamps)
                 for u in panel.data.units[:6] for p in (0, 1)}
        outputs.append(plots.save_series(
            out / "truth.png", grid.timestamps, shown,
            title=f"true survival curves ({config.model}, seed {config.seed})",
        ))

    manifest.add_info(
        nu=panel.nu,
        lam0=panel.lam0,
        achieved_censoring=panel.censoring_rate,
        target_unit=panel.target_unit,
    )
    manifest.finish(outputs)
    print(f"simulate: wrote {len(outputs)} files to {out}")
    return 0


def _load_panel_and_pool(args):
    data = load_csv(args.input)
    pool = DonorPool.from_panel(data, target_unit=args.target_unit)
    grid = synth.make_grid(data, quantile=args.quantile, t0=args.t0)
    return data, pool, grid


def _estimate_flags(args) -> dict:
    return {"clip": args.clip, "isotonic": args.isotonic}


def cmd_estimate(args) -> int:
    out = _out_dir(args)
    config = {
        "input": args.input, "target_unit": args.target_unit, "rank": args.rank,
        "quantile": args.quantile, "t0": args.t0, "clip": args.clip,
        "isotonic": args.isotonic,
    }
    manifest = RunManifest(out, "estimate", config, __version__, inputs=[args.input])
    data, pool, grid = _load_panel_and_pool(args)
    result = synth.estimate(data, pool, grid, args.rank, **_estimate_flags(args))
    outputs = [
        _write_csv(
            out / "counterfactual.csv",
            ["t", "pre_fit", "counterfactual"],
            zip(grid.timestamps, result.pre_fit, result.counterfactual),
        ),
        _write_csv(
            out / "weights.csv",
            ["unit", "weight"],
            zip(result.donor_order, result.weights.weights),
        ),
    ]
    target_pre = km.subsample_on_grid(
        km.km_fit(data.cell(0, pool.target_unit)), grid.timestamps
    )
    series = {
        "target_pre": (grid.timestamps, target_pre),
        "pre_fit": (grid.timestamps, result.pre_fit),
        "counterfactual": (grid.timestamps, result.counterfactual),
    }
    outputs.append(_write_long(out / "long.csv", series))
    if not args.no_plots:
        outputs.append(plots.save_series(
            out / "counterfactual.png", grid.timestamps,
            {k: v for k, (_, v) in series.items()},
            title=f"synthetic trajectory for {pool.target_unit}",
        ))
    manifest.add_info(
        rank_used=result.weights.rank_used,
        pre_fit_residual=result.weights.pre_fit_residual,
        horizon=grid.horizon,
    )
    manifest.finish(outputs)
    print(f"estimate: rank {result.weights.rank_used}, "
          f"pre-fit residual {result.weights.pre_fit_residual:.4g}; wrote to {out}")
    return 0


def cmd_bootstrap(args) -> int:
    out = _out_dir(args)
    config = {
        "input": args.input, "target_unit": args.target_unit, "rank": args.rank,
        "quantile": args.quantile, "t0": args.t0, "clip": args.clip,
        "isotonic": args.isotonic, "b": args.b, "level": args.level, "seed": args.seed,
    }
    manifest = RunManifest(out, "bootstrap", config, __version__, inputs=[args.input])
    data, pool, grid = _load_panel_and_pool(args)
    band = synth.bootstrap(
        data, pool, grid, args.rank, b=args.b, level=args.level,
        seed=args.seed if args.seed is not None else 0, **_estimate_flags(args),
    )
    outputs = [
        _write_csv(
            out / "band.csv",
            ["t", "lower", "point", "upper"],
            zip(grid.timestamps, band.lower, band.point, band.upper),
        ),
        _write_long(out / "long.csv", {
            "lower": (grid.timestamps, band.lower),
            "point": (grid.timestamps, band.point),
            "upper": (grid.timestamps, band.upper),
        }),
    ]
    if not args.no_plots:
        outputs.append(plots.save_band(
            out / "band.png", grid.timestamps, band.lower, band.point, band.upper,
            band.level, title=f"bootstrap band for {pool.target_unit} (B={band.replicates})",
        ))
    manifest.finish(outputs)
    print(f"bootstrap: B={band.replicates}, level={band.level}; wrote to {out}")
    return 0


def cmd_cox(args) -> int:
    out = _out_dir(args)
    config = {"input": args.input, "period": args.period, "marginal": args.marginal,
              "t0": args.t0}
    manifest = RunManifest(out, "cox", config, __version__, inputs=[args.input])
    data = load_csv(args.input)
    obs = []
    for unit in data.units:
        for period in (0, 1):
            if args.period is not None and period != args.period:
                continue
            obs.extend(data.cell(period, unit))
    if not obs:
        raise EstimationError("no observations after filtering")
    if data.n_covariates == 0:
        raise EstimationError("no covariates")
    fit = cox.cox_fit(obs)
    names = [f"x{i+1}" for i in range(fit.n_covariates)] + ["treatment"]
    outputs = [
        _write_csv(out / "beta.csv", ["term", "coefficient"], zip(names, fit.beta)),
        _write_csv(
            out / "baseline.csv", ["time", "cumulative_hazard"],
            zip(fit.baseline.times, fit.baseline.values),
        ),
    ]
    series = {"cumulative_hazard": (fit.baseline.times, fit.baseline.values)}
    marginal = None
    if args.marginal:
        rows = np.array([o.covariates for o in obs], dtype=float)
        grid = None
        if args.t0 is not None:
            grid = np.linspace(0.0, float(fit.baseline.times[-1]), args.t0 + 1)
        marginal = cox.marginal_counterfactual_hazard(fit, rows, grid=grid)
        outputs.append(_write_csv(
            out / "marginal.csv", ["t", "hazard"],
            zip(marginal.timestamps, marginal.values),
        ))
        series["marginal_hazard"] = (marginal.timestamps, marginal.values)
    outputs.append(_write_long(out / "long.csv", series))
    if not args.no_plots:
        outputs.append(plots.save_hazard(
            out / "baseline.png", fit.baseline.times, fit.baseline.values,
            title="baseline cumulative hazard",
        ))
        if marginal is not None:
            outputs.append(plots.save_hazard(
                out / "marginal.png", marginal.timestamps, marginal.values,
                title="marginal hazard under control",
            ))
    manifest.add_info(n_iter=fit.n_iter, grad_norm=fit.grad_norm)
    manifest.finish(outputs)
    print(f"cox: beta = {np.array2string(fit.beta, precision=4)}; wrote to {out}")
    return 0


def cmd_km(args) -> int:
    out = _out_dir(args)
    config = {"input": args.input, "unit": args.unit, "period": args.period}
    manifest = RunManifest(out, "km", config, __version__, inputs=[args.input])
    data = load_csv(args.input)
    cell = data.cell(args.period, args.unit)
    if not cell:
        raise EstimationError(f"cell ({args.period}, {args.unit}) is empty or missing")
    curve = km.km_fit(cell)
    outputs = [
        _write_csv(out / "km.csv", ["jump_time", "value"],
                   zip(curve.jump_times, curve.values)),
        _write_long(out / "long.csv", {"km": (curve.jump_times, curve.values)}),
    ]
    if not args.no_plots:
        horizon = max((o.time for o in cell), default=None)
        outputs.append(plots.save_step_curve(
            out / "km.png", curve.jump_times, curve.values, horizon=horizon,
            title=f"KM curve for unit {args.unit}, period {args.period}",
        ))
    manifest.finish(outputs)
    print(f"km: {curve.jump_times.size} jumps; wrote to {out}")
    return 0


_BENCH_KEYS = {
    "models": ["cox", "aalen"],
    "k_values": [100, 300, 700],
    "seeds": list(range(1, 21)),
    "n_units": 20,
    "r": 4,
    "lambda": 0.05,
    "target_censoring": 0.10,
    "censoring_tolerance": 0.01,
    "rank": "gap",
    "quantile": 0.90,
    "t0": 100,
}


def run_bench_row(model: str, k: int, seed: int, bench: dict):
    """One replication: simulate, estimate both ways, score against truth."""
    config = simulate.DGPConfig(
        model=model, n_units=int(bench["n_units"]), r=int(bench["r"]), k=k,
        lam=float(bench["lambda"]), target_censoring=float(bench["target_censoring"]),
        censoring_tolerance=float(bench["censoring_tolerance"]), seed=seed,
    )
    panel = simulate.generate_panel(config)
    grid = synth.make_grid(panel.data, quantile=float(bench["quantile"]),
                           t0=int(bench["t0"]))
    truth = panel.held_out_truth(grid.timestamps)
    pool = DonorPool.from_panel(panel.data)
    fit = synth.estimate(panel.data, pool, grid, bench["rank"])
    ssc_err = metrics.sup_norm_error(fit.counterfactual, truth)
    oracle = simulate.oracle_estimate(panel.factors, panel.data, config, grid)
    oracle_err = metrics.sup_norm_error(oracle, truth)
    return ssc_err, oracle_err, panel.censoring_rate


def cmd_bench(args) -> int:
    bench = _read_json_config(args.config, _BENCH_KEYS)
    out = _out_dir(args)
    manifest = RunManifest(out, "bench", bench, __version__, inputs=[args.config])
    long_rows = []
    by_config: dict[tuple[str, int, str], list[tuple[int, float]]] = {}
    failures = 0
    for model in bench["models"]:
        for k in bench["k_values"]:
            for seed in bench["seeds"]:
                try:
                    ssc_err, oracle_err, cens = run_bench_row(model, k, int(seed), bench)
                except (SynthsurvError, np.linalg.LinAlgError) as e:
                    failures += 1
                    long_rows.append([model, k, seed, "ssc", "", f"failed: {e}"])
                    continue
                long_rows.append([model, k, seed, "ssc", ssc_err, ""])
                long_rows.append([model, k, seed, "oracle", oracle_err, ""])
                by_config.setdefault((model, k, "ssc"), []).append((seed, ssc_err))
                by_config.setdefault((model, k, "oracle"), []).append((seed, oracle_err))
    outputs = [_write_csv(
        out / "long.csv",
        ["model", "k", "seed", "estimator", "sup_norm_error", "status"],
        long_rows,
    )]
    summaries = metrics.summarize_errors(by_config) if by_config else []
    table: dict[tuple[str, int], dict] = {}
    for s in summaries:
        table.setdefault((s.model, s.k), {})[s.estimator] = s
    summary_rows = []
    for (model, k), ests in sorted(table.items()):
        ssc_s, oracle_s = ests.get("ssc"), ests.get("oracle")
        summary_rows.append([
            model, k,
            ssc_s.mean if ssc_s else "", ssc_s.sd if ssc_s else "",
            oracle_s.mean if oracle_s else "", oracle_s.sd if oracle_s else "",
            len(ssc_s.per_replication) if ssc_s else 0,
        ])
    outputs.append(_write_csv(
        out / "summary.csv",
        ["model", "k", "ssc_mean", "ssc_sd", "oracle_mean", "oracle_sd", "n_reps"],
        summary_rows,
    ))
    if not args.no_plots and by_config:
        groups = {
            f"{model} K={k}": [e for _, e in pairs]
            for (model, k, est), pairs in sorted(by_config.items()) if est == "ssc"
        }
        outputs.append(plots.save_error_boxplot(
            out / "errors.png", groups, title="sup-norm error by design",
        ))
    manifest.add_info(failures=failures)
    manifest.finish(outputs, status="complete" if failures == 0 else "complete-with-failures")
    for row in summary_rows:
        print(f"bench: {row[0]} K={row[1]} ssc={row[2]:.4f} oracle={row[4]:.4f}"
              if row[2] != "" else f"bench: {row[0]} K={row[1]} all failed")
    print(f"bench: {failures} failed replications; wrote to {out}")
    return 0 if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synthsurv",
        description="Counterfactual survival trajectories by synthetic control "
                    "on censored panel data.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--no-plots", action="store_true", help="skip figure rendering")

    def add_estimator_flags(p):
        p.add_argument("--input", required=True, help="panel CSV file")
        p.add_argument("--target-unit", default=None,
                       help="treated unit (default: inferred from treatment column)")
        p.add_argument("--rank", default="gap",
                       help="rank policy: gap, energy:<theta> or fixed:<k>")
        p.add_argument("--quantile", type=float, default=0.90,
                       help="pooled-time quantile setting the horizon")
        p.add_argument("--t0", type=int, default=100, help="number of grid points")
        p.add_argument("--clip", dest="clip", action="store_true", default=True)
        p.add_argument("--no-clip", dest="clip", action="store_false",
                       help="export the raw weighted combination")
        p.add_argument("--isotonic", action="store_true",
                       help="project the counterfactual to a non-increasing curve")

    p = sub.add_parser("simulate", help="generate a synthetic panel with ground truth")
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate the counterfactual trajectory")
    add_estimator_flags(p)
    add_common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("bootstrap", help="donor-pool bootstrap confidence band")
    add_estimator_flags(p)
    p.add_argument("--b", type=int, default=500, help="number of resamples")
    p.add_argument("--level", type=float, default=0.95, help="band level")
    p.add_argument("--seed", type=int, default=0)
    add_common(p)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("cox", help="proportional-hazards fit with Breslow baseline")
    p.add_argument("--input", required=True, help="CSV with covariate columns")
    p.add_argument("--period", type=int, choices=(0, 1), default=None,
                   help="restrict to one period")
    p.add_argument("--marginal", action="store_true",
                   help="emit the marginal hazard under control")
    p.add_argument("--t0", type=int, default=None,
                   help="bins for a uniform-grid marginal hazard")
    add_common(p)
    p.set_defaults(func=cmd_cox)

    p = sub.add_parser("km", help="product-limit curve for one cell")
    p.add_argument("--input", required=True, help="panel CSV file")
    p.add_argument("--unit", required=True)
    p.add_argument("--period", type=int, choices=(0, 1), required=True)
    add_common(p)
    p.set_defaults(func=cmd_km)

    p = sub.add_parser("bench", help="simulate/estimate/score over a design grid")
    p.add_argument("--config", required=True, help="JSON config file")
    add_common(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except SynthsurvError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
