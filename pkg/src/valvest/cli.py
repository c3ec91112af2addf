"""Command-line pipeline: simulate, analyze spectra, estimate, sweep, report.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

All stochastic steps take ``--seed`` and every run with identical inputs,
config, and seed writes byte-identical output files: floats are formatted
with ``repr`` (shortest round-trip), rows are emitted in a fixed order,
and concurrent sweep points are collected by a single writer in
submission order. A JSON config file may supply any long-option value
(keys use underscores); explicit flags override the file.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .armax import ArmaxSpec, fit_armax
from .design_matrix import (
    SystemConstants,
    build_problem,
    colinearity_report,
    make_problem_builder,
    regressor_matrix,
)
from .errors import DataError, NumericalError
from .ols import fit_ols
from .spectrum import dominant_cycle, optimal_sampling_time, periodogram
from .stroke_volume_search import ValveCatalog, load_default_catalog, search_valve_sets
from .thermo_props import load_default_table
from .timeseries_io import (
    SampledSeries,
    parse_dataset,
    resample_dataset,
    serialize_dataset,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_PRESET_NAMES = (
    "otterup-like",
    "iid-noise",
    "arma-noise",
    "modulating-only",
    "hysteresis-only",
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad flags; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(value) -> str:
    """Shortest round-trip decimal for floats; empty cell for None/NaN."""
    if value is None:
        return ""
    if isinstance(value, float) and math.isnan(value):
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(c if isinstance(c, str) else _fmt(c) for c in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise _UsageError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise _UsageError(f"config file is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise _UsageError("config file must hold a JSON object")
    return cfg


def _opt(args, cfg: dict, name: str, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in cfg:
        return cfg[name]
    return default


def _require(args, cfg: dict, name: str):
    value = _opt(args, cfg, name)
    if value is None:
        raise _UsageError(f"missing required option --{name.replace('_', '-')}")
    return value


def _load_dataset(args, cfg):
    data_path = _require(args, cfg, "data")
    schema = _opt(args, cfg, "schema")
    if isinstance(schema, str):
        try:
            schema = json.loads(Path(schema).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise _UsageError(f"schema file not found: {schema}")
        except json.JSONDecodeError as exc:
            raise _UsageError(f"schema file is not valid JSON: {exc}")
    try:
        raw = Path(data_path).read_bytes()
    except FileNotFoundError:
        raise DataError(f"dataset file not found: {data_path}")
    return parse_dataset(raw, schema)


def _out_dir(args, cfg) -> Path:
    out = Path(_require(args, cfg, "out_dir"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resample_factor(ds, dt_min: int) -> int:
    target = dt_min * 60.0
    m = target / ds.dt_seconds
    if abs(m - round(m)) > 1e-9 or round(m) < 1:
        raise DataError(
            f"sampling time {dt_min} min is not a multiple of the native "
            f"step {ds.dt_seconds:g} s"
        )
    return int(round(m))


def _x_series(ds, table) -> dict[str, SampledSeries]:
    x = regressor_matrix(ds, table)
    out = {}
    for j, ev in enumerate(ds.evap_ids):
        col = x[:, j]
        out[ev] = SampledSeries(ds.start, ds.dt_seconds, col, ~np.isfinite(col))
    return out


# ---------------------------------------------------------------- simulate


def cmd_simulate(args, cfg) -> int:
    from .simulator import scenario_presets, simulate

    preset = _require(args, cfg, "preset")
    if preset not in _PRESET_NAMES:
        raise _UsageError(f"unknown preset {preset!r}; choose from {', '.join(_PRESET_NAMES)}")
    minutes = int(_opt(args, cfg, "minutes", 20160))
    seed = int(_opt(args, cfg, "seed", 1))
    spec = scenario_presets(duration_min=minutes, seed=seed)[preset]

    vs = _opt(args, cfg, "vs")
    if vs is not None:
        spec = replace(spec, v_s=float(vs))
    eta = _opt(args, cfg, "eta_vol")
    if eta is not None:
        spec = replace(spec, eta_vol=float(eta))
    start = _opt(args, cfg, "start")
    if start is not None:
        spec = replace(spec, start=start)

    ds, truth = simulate(spec)

    out = Path(_require(args, cfg, "out"))
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(serialize_dataset(ds), encoding="utf-8")

    truth_path = _opt(args, cfg, "truth")
    if truth_path:
        rows = [(ev, a) for ev, a in zip(truth.evap_ids, truth.a)]
        rows.append(("vs_m3", truth.v_s))
        _write_csv(Path(truth_path), ["evaporator", "A_true"], rows)

    print(f"simulated {len(ds)} minutes, {ds.n_evaporators} evaporators -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------- spectrum


def _spectrum_rows(ds, table, channel: str, out_dir: Path | None):
    if channel == "x":
        series = _x_series(ds, table)
    else:
        series = {ev: ds.channel(f"lambda[{ev}]") for ev in ds.evap_ids}
    rows = []
    for ev in ds.evap_ids:
        pg = periodogram(series[ev], channel=f"{channel}[{ev}]")
        if out_dir is not None:
            _write_csv(
                out_dir / f"spectrum_{ev}.csv",
                ["freq_cpm", "power"],
                zip(pg.frequencies, pg.power),
            )
        est = dominant_cycle(pg)
        rows.append((ev, est.cycle_minutes, est.prominence, optimal_sampling_time(est)))
    return rows


def cmd_spectrum(args, cfg) -> int:
    ds = _load_dataset(args, cfg)
    out = _out_dir(args, cfg)
    channel = _opt(args, cfg, "channel", "x")
    if channel not in ("x", "lambda"):
        raise _UsageError("--channel must be x or lambda")
    rows = _spectrum_rows(ds, load_default_table(), channel, out)
    _write_csv(out / "spectrum_summary.csv", ["evaporator", "cycle_min", "prominence", "optimal_dt_min"], rows)
    for ev, cyc, prom, dt in rows:
        print(f"{ev}: cycle {cyc:.2f} min (prominence {prom:.1f}) -> sample every {dt} min")
    return EXIT_OK


# ---------------------------------------------------------------- estimate


def _prepare_problem(args, cfg):
    ds = _load_dataset(args, cfg)
    table = load_default_table()
    dt_min = int(_opt(args, cfg, "dt_min", round(ds.dt_seconds / 60.0) or 1))
    m = _resample_factor(ds, dt_min)
    if m > 1:
        ds = resample_dataset(ds, m)
    consts = SystemConstants(
        v_s=float(_require(args, cfg, "vs")),
        eta_vol=float(_opt(args, cfg, "eta_vol", 0.9)),
    )
    return ds, build_problem(ds, consts, table)


def _write_coefficients(out: Path, evap_ids, beta, se, ci95) -> None:
    rows = [
        (ev, b, s, lo, hi)
        for ev, b, s, (lo, hi) in zip(evap_ids, beta, se, ci95)
    ]
    _write_csv(out / "coefficients.csv", ["evaporator", "beta", "se", "ci_lo", "ci_hi"], rows)


def _write_acf(out: Path, diagnostics, n_resid: int) -> None:
    band = 1.96 / math.sqrt(n_resid)
    rows = [(lag + 1, r, band) for lag, r in enumerate(diagnostics.acf)]
    _write_csv(out / "acf.csv", ["lag", "acf", "conf_band"], rows)


def cmd_estimate_ols(args, cfg) -> int:
    _, problem = _prepare_problem(args, cfg)
    fit = fit_ols(problem, intercept=bool(_opt(args, cfg, "intercept", False)))
    out = _out_dir(args, cfg)
    _write_coefficients(out, fit.evap_ids, fit.beta, fit.se, fit.ci95)
    _write_acf(out, fit.diagnostics, fit.residuals.size)
    report = colinearity_report(problem)
    for ev, b, (lo, hi) in zip(fit.evap_ids, fit.beta, fit.ci95):
        flag = " [colinear]" if ev in report.flagged else ""
        print(f"{ev}: beta={b:.5f}  ci95=[{lo:.5f}, {hi:.5f}]{flag}")
    stat, p = fit.diagnostics.ljung_box
    print(f"Ljung-Box({fit.diagnostics.lb_lag}): stat={stat:.2f} p={p:.4g}")
    return EXIT_OK


def cmd_estimate_armax(args, cfg) -> int:
    _, problem = _prepare_problem(args, cfg)
    spec = ArmaxSpec(int(_opt(args, cfg, "p", 4)), int(_opt(args, cfg, "q", 1)))
    fit = fit_armax(problem, spec)
    out = _out_dir(args, cfg)
    _write_coefficients(out, fit.evap_ids, fit.beta, fit.se, fit.ci95)
    _write_acf(out, fit.diagnostics, fit.residuals.size)
    header = (
        [f"phi_{k + 1}" for k in range(spec.p)]
        + [f"theta_{k + 1}" for k in range(spec.q)]
        + ["sigma2", "loglik", "converged"]
    )
    row = list(fit.phi) + list(fit.theta) + [fit.sigma2, fit.loglik, fit.converged]
    _write_csv(out / "model.csv", header, [row])
    for ev, b, (lo, hi) in zip(fit.evap_ids, fit.beta, fit.ci95):
        print(f"{ev}: beta={b:.5f}  ci95=[{lo:.5f}, {hi:.5f}]")
    stat, p = fit.diagnostics.ljung_box
    print(
        f"ARMAX({spec.p},{spec.q}) loglik={fit.loglik:.2f} converged={fit.converged} "
        f"Ljung-Box p={p:.4g}"
    )
    return EXIT_OK


def cmd_estimate_vs(args, cfg) -> int:
    ds = _load_dataset(args, cfg)
    table = load_default_table()
    builder = make_problem_builder(ds, table, eta_vol=float(_opt(args, cfg, "eta_vol", 0.9)))
    catalog_path = _opt(args, cfg, "catalog")
    if catalog_path:
        catalog = ValveCatalog.from_csv(Path(catalog_path).read_text(encoding="utf-8"))
    else:
        catalog = load_default_catalog()
    guess = _opt(args, cfg, "vs_guess")
    rows = search_valve_sets(
        builder,
        catalog,
        vs_guess=float(guess) if guess is not None else None,
        seed=int(_opt(args, cfg, "seed", 0)),
        jobs=_opt(args, cfg, "jobs"),
    )

    def assignment_text(row) -> str:
        names_by_center = row.names  # names sorted by constant within the row
        pairs = []
        for ev, c in zip(ds.evap_ids, row.assignment):
            pairs.append(f"{ev}={names_by_center[c] if c >= 0 else '-'}")
        return ";".join(pairs)

    out = Path(_require(args, cfg, "out"))
    out.parent.mkdir(parents=True, exist_ok=True)
    csv_rows = []
    for row in rows:
        csv_rows.append(
            (
                row.rank,
                "+".join(row.names),
                row.vs_hat,
                "inf" if math.isinf(row.e1) else _fmt(row.e1),
                "inf" if math.isinf(row.e2) else _fmt(row.e2),
                row.error if row.error else assignment_text(row),
            )
        )
    _write_csv(out, ["rank", "valve_set", "vs_hat_m3", "E1", "E2", "beta_assignments"], csv_rows)
    for row in rows[:5]:
        print(f"#{row.rank} {{{', '.join(row.names)}}} vs_hat={row.vs_hat:.5g} E1={row.e1:.4g}")
    return EXIT_OK


# ------------------------------------------------------------------- sweep


def _sweep_point(ds, table, consts, model: str, dt_min: int, spec: ArmaxSpec):
    """One (model, sampling time) evaluation; never raises."""
    try:
        m = _resample_factor(ds, dt_min)
        ds_m = resample_dataset(ds, m) if m > 1 else ds
        problem = build_problem(ds_m, consts, table)
        if model == "ols":
            fit = fit_ols(problem)
        else:
            fit = fit_armax(problem, spec)
        p_val = fit.diagnostics.ljung_box[1]
        return {
            ev: (dt_min, b, lo, hi, p_val, "")
            for ev, b, (lo, hi) in zip(fit.evap_ids, fit.beta, fit.ci95)
        }
    except (DataError, NumericalError) as exc:
        tag = f"{type(exc).__name__}: {exc}"
        return {ev: (dt_min, None, None, None, None, tag) for ev in ds.evap_ids}


def cmd_sweep(args, cfg) -> int:
    ds = _load_dataset(args, cfg)
    table = load_default_table()
    consts = SystemConstants(
        v_s=float(_require(args, cfg, "vs")),
        eta_vol=float(_opt(args, cfg, "eta_vol", 0.9)),
    )

    dts = _opt(args, cfg, "dts", list(range(1, 31)))
    if isinstance(dts, str):
        dts = [part for part in dts.split(",") if part.strip()]
    dts = [int(v) for v in dts]
    if not dts:
        raise _UsageError("sweep list is empty")
    if any(not 1 <= v <= 30 for v in dts):
        raise _UsageError("sweep values must be integer minutes in [1, 30]")
    dts = sorted(set(dts))

    model_choice = _opt(args, cfg, "model", "ols")
    if model_choice not in ("ols", "armax", "both"):
        raise _UsageError("--model must be ols, armax or both")
    models = ["ols", "armax"] if model_choice == "both" else [model_choice]
    spec = ArmaxSpec(int(_opt(args, cfg, "p", 4)), int(_opt(args, cfg, "q", 1)))

    tasks = [(model, dt) for model in models for dt in dts]
    jobs = _opt(args, cfg, "jobs")

    def run(task):
        model, dt = task
        return _sweep_point(ds, table, consts, model, dt, spec)

    if jobs and int(jobs) > 1:
        with ThreadPoolExecutor(max_workers=int(jobs)) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]

    out = _out_dir(args, cfg)
    header = ["dt_min", "beta", "ci_lo", "ci_hi", "ljung_box_p", "error"]
    for model in models:
        per_evap = {ev: [] for ev in ds.evap_ids}
        for task, rows in zip(tasks, results):
            if task[0] != model:
                continue
            for ev in ds.evap_ids:
                per_evap[ev].append(rows[ev])
        for ev in ds.evap_ids:
            _write_csv(out / f"sweep_{model}_{ev}.csv", header, per_evap[ev])

    try:
        rows = _spectrum_rows(ds, table, "x", None)
    except DataError as exc:
        rows = [(ev, None, None, f"{type(exc).__name__}: {exc}") for ev in ds.evap_ids]
    _write_csv(out / "spectrum_summary.csv", ["evaporator", "cycle_min", "prominence", "optimal_dt_min"], rows)

    n_fail = sum(1 for rows_ in results for v in rows_.values() if v[5])
    print(f"swept {len(dts)} sampling times x {len(models)} model(s); {n_fail} failed cells -> {out}")
    return EXIT_OK


# ------------------------------------------------------------------ report


def cmd_report(args, cfg) -> int:
    in_dir = Path(_require(args, cfg, "in_dir"))
    if not in_dir.is_dir():
        raise DataError(f"not a directory: {in_dir}")
    out = Path(_opt(args, cfg, "out_dir") or in_dir)
    out.mkdir(parents=True, exist_ok=True)

    try:
        import matplotlib
    except ImportError:
        raise _UsageError("the report subcommand needs matplotlib (install extra 'plots')")
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "valvest"
    import matplotlib.pyplot as plt

    def read_rows(path: Path):
        lines = path.read_text(encoding="utf-8").strip().splitlines()
        header = lines[0].split(",")
        return header, [ln.split(",") for ln in lines[1:]]

    def save(fig, path: Path):
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path.name)

    written: list[str] = []

    optimal_dt = {}
    summary = in_dir / "spectrum_summary.csv"
    if summary.exists():
        _, rows = read_rows(summary)
        for row in rows:
            if len(row) >= 4 and row[3]:
                try:
                    optimal_dt[row[0]] = int(row[3])
                except ValueError:
                    pass

    for path in sorted(in_dir.glob("sweep_*.csv")):
        stem = path.stem
        ev = stem.split("_", 2)[2] if stem.count("_") >= 2 else stem
        _, rows = read_rows(path)
        pts = [r for r in rows if len(r) >= 5 and r[1]]
        if not pts:
            continue
        dt = [float(r[0]) for r in pts]
        beta = [float(r[1]) for r in pts]
        lo = [float(r[2]) for r in pts]
        hi = [float(r[3]) for r in pts]
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.fill_between(dt, lo, hi, alpha=0.25, linewidth=0, label="95% CI")
        ax.plot(dt, beta, marker="o", markersize=3)
        if ev in optimal_dt:
            ax.axvline(optimal_dt[ev], linestyle="--", linewidth=1, color="gray")
        ax.set_xlabel("sampling time [min]")
        ax.set_ylabel("valve constant")
        ax.set_title(stem)
        save(fig, out / f"{stem}.svg")

    acf_path = in_dir / "acf.csv"
    if acf_path.exists():
        _, rows = read_rows(acf_path)
        lags = [int(r[0]) for r in rows]
        vals = [float(r[1]) for r in rows]
        band = float(rows[0][2]) if rows else 0.0
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.axhspan(-band, band, alpha=0.2, linewidth=0)
        ax.stem(lags, vals, basefmt=" ")
        ax.set_xlabel("lag")
        ax.set_ylabel("residual ACF")
        save(fig, out / "acf.svg")

    if not written:
        raise DataError(f"no plottable CSVs found in {in_dir}")
    print(f"wrote {len(written)} figure(s): {', '.join(written)}")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _build_parser() -> _Parser:
    parser = _Parser(prog="valvest", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name: str, func, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--seed", type=int, help="seed for stochastic steps")
        return p

    p = add("simulate", cmd_simulate, "generate a synthetic plant dataset")
    p.add_argument("--preset", choices=_PRESET_NAMES)
    p.add_argument("--minutes", type=int, help="simulated duration (default 20160)")
    p.add_argument("--vs", type=float, help="override stroke volume [m^3]")
    p.add_argument("--eta-vol", dest="eta_vol", type=float)
    p.add_argument("--start", help="RFC 3339 start timestamp")
    p.add_argument("--out", help="dataset CSV path")
    p.add_argument("--truth", help="ground-truth CSV path")

    p = add("spectrum", cmd_spectrum, "periodograms and cycle times per evaporator")
    p.add_argument("--data")
    p.add_argument("--schema", help="JSON column-mapping file")
    p.add_argument("--channel", choices=("x", "lambda"))
    p.add_argument("--out-dir", dest="out_dir")

    for name, func in (("estimate-ols", cmd_estimate_ols), ("estimate-armax", cmd_estimate_armax)):
        p = add(name, func, f"fit valve constants by {name.split('-')[1].upper()}")
        p.add_argument("--data")
        p.add_argument("--schema")
        p.add_argument("--vs", type=float, help="stroke volume [m^3]")
        p.add_argument("--eta-vol", dest="eta_vol", type=float)
        p.add_argument("--dt-min", dest="dt_min", type=int, help="sampling time [min]")
        p.add_argument("--out-dir", dest="out_dir")
        if name == "estimate-ols":
            p.add_argument("--intercept", action="store_const", const=True)
        else:
            p.add_argument("--p", type=int, help="AR order (default 4)")
            p.add_argument("--q", type=int, help="MA order (default 1)")

    p = add("estimate-vs", cmd_estimate_vs, "search stroke volume and valve sets")
    p.add_argument("--data")
    p.add_argument("--schema")
    p.add_argument("--eta-vol", dest="eta_vol", type=float)
    p.add_argument("--vs-guess", dest="vs_guess", type=float)
    p.add_argument("--catalog", help="alternative valve catalog CSV")
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", help="ranked candidates CSV path")

    p = add("sweep", cmd_sweep, "estimate across sampling times")
    p.add_argument("--data")
    p.add_argument("--schema")
    p.add_argument("--vs", type=float)
    p.add_argument("--eta-vol", dest="eta_vol", type=float)
    p.add_argument("--dts", help="comma-separated minutes (default 1..30)")
    p.add_argument("--model", choices=("ols", "armax", "both"))
    p.add_argument("--p", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out-dir", dest="out_dir")

    p = add("report", cmd_report, "render sweep/ACF CSVs to SVG figures")
    p.add_argument("--in-dir", dest="in_dir")
    p.add_argument("--out-dir", dest="out_dir")

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if not hasattr(args, "func"):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _load_config(args.config)
        return args.func(args, cfg)
    except _UsageError as exc:
        print(f"valvest: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"valvest: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"valvest: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
