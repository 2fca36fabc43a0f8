"""Command-line front end: ``eitlab run|sweep|compare|analyze|list-scenarios``.

Exit codes: 0 success, 1 configuration or input error, 2 solver
instability or failed sweep point, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, analysis, io, scenarios
from .core import mixing_angles
from .mb_solver import SolverInstability, StabilityWarning, run as mb_run

log = logging.getLogger("eitlab")

OUTPUT_ROOT_ENV = "EITLAB_OUTPUT_ROOT"
EXIT_OK, EXIT_CONFIG, EXIT_UNSTABLE, EXIT_IO = 0, 1, 2, 3


def output_dir(arg: str | None, settings: dict, name: str) -> Path:
    """``--out`` wins, then ``output.dir`` from the config, then the env root."""
    if arg:
        return Path(arg)
    if settings.get("output", {}).get("dir"):
        return Path(settings["output"]["dir"])
    root = os.environ.get(OUTPUT_ROOT_ENV, "eitlab-output")
    return Path(root) / name


def _window(analysis_cfg: dict, key: str, marks: dict, start: str, end: str):
    if key in analysis_cfg:
        w = analysis_cfg[key]
        if not (isinstance(w, list) and len(w) == 2):
            raise io.ConfigError("expected [start, end]", f"analysis.{key}")
        return float(w[0]), float(w[1])
    if start in marks and end in marks:
        return float(marks[start]), float(marks[end])
    return None


def analysis_windows(sc: scenarios.Scenario, analysis_cfg: dict) -> dict:
    return {
        "velocity_window": _window(analysis_cfg, "velocity_window_us", sc.marks, "fit_start", "fit_end"),
        "width_window": _window(analysis_cfg, "width_window_us", sc.marks, "hold_start", "hold_end"),
        "decay_window": _window(analysis_cfg, "decay_window_us", sc.marks, "decay_start", "decay_end"),
    }


def analytic_velocity_in(sc: scenarios.Scenario, window) -> dict:
    t = 0.5 * (window[0] + window[1]) if window else 0.5 * sc.grid.t_max
    op, om = sc.schedule.evaluate(t)
    ang = mixing_angles(op, om, sc.params)
    v = sc.params.gamma_e * ang.tan2_theta * ang.cos_2phi
    return {"time_us": t, "tan2_theta": ang.tan2_theta,
            "cos_2phi": ang.cos_2phi if ang.phi_defined else None, "v": v}


def run_scenario(sc: scenarios.Scenario, settings: dict, out: Path, binary: bool = False) -> dict:
    """Run one scenario, write its artifacts into ``out`` and return the summary."""
    flags = settings["output"]
    out.mkdir(parents=True, exist_ok=True)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", StabilityWarning)
        record = mb_run(sc.params, sc.schedule, sc.probe, sc.grid, sc.options)
    windows = analysis_windows(sc, settings["analysis"])
    summary = {
        "scenario": io.scenario_to_dict(sc),
        "normalization": record.normalization,
        "analysis": analysis.summarize_record(record, **windows),
        "analytic_velocity": analytic_velocity_in(sc, windows["velocity_window"]),
        "windows_us": windows,
        "diagnostics": {k: v for k, v in record.diagnostics.items() if k != "final_state"},
        "warnings": [str(w.message) for w in caught],
    }
    if flags.get("record_matrix", True):
        io.write_record_csv(record, out / "record.csv")
    if binary or flags.get("binary"):
        io.write_record_binary(record, out / "record.bin")
    if flags.get("detectors", True):
        io.write_detectors_csv(record, out / "detectors.csv")
    if flags.get("plot_data", True):
        io.write_plot_data(record, out, sc.name)
    if flags.get("analysis_summary", True):
        (out / "summary.json").write_text(json.dumps(io.to_jsonable(summary), indent=2, sort_keys=True) + "\n")
    return summary


def _load(args) -> tuple[scenarios.Scenario, dict]:
    if args.config:
        return io.load_run_config(args.config, args.override)
    if getattr(args, "scenario", None):
        return io.resolve_config({"scenario": args.scenario}, args.override)
    raise io.ConfigError("either --config or --scenario is required")


def cmd_run(args) -> int:
    sc, settings = _load(args)
    out = output_dir(args.out, settings, sc.name)
    summary = run_scenario(sc, settings, out, args.binary)
    vel = summary["analysis"]["velocity"]
    print(f"{sc.name}: wrote {out}  (fitted v = {vel.get('params', {}).get('velocity', float('nan')):.6g}, "
          f"normalization = {summary['normalization']:.6g})")
    return EXIT_OK


def _sweep_point(task):
    idx, sc, settings, out, binary = task
    try:
        summary = run_scenario(sc, settings, out, binary)
    except SolverInstability as exc:
        return idx, None, EXIT_UNSTABLE, str(exc)
    except OSError as exc:
        return idx, None, EXIT_IO, str(exc)
    except Exception as exc:  # noqa: BLE001 - recorded per point, sweep continues
        return idx, None, EXIT_UNSTABLE, f"{type(exc).__name__}: {exc}"
    return idx, summary, EXIT_OK, ""


def cmd_sweep(args) -> int:
    if not args.config:
        raise io.ConfigError("sweep needs --config")
    raw = io.parse_toml(Path(args.config).read_text()) if Path(args.config).exists() else None
    if raw is None:
        raise FileNotFoundError(f"cannot read config {args.config}")
    sweep = raw.get("sweep")
    if not isinstance(sweep, dict):
        raise io.ConfigError("missing [sweep] table", "sweep")
    param = sweep.get("parameter")
    values = sweep.get("values")
    if not isinstance(param, str):
        raise io.ConfigError("expected a dotted key string", "sweep.parameter")
    if not isinstance(values, list) or not values:
        raise io.ConfigError("sweep grid is empty", "sweep.values")

    points = []
    for v in values:
        over = [*args.override, f"{param}={_toml_literal(v)}"]
        sc, settings = io.resolve_config(raw, over)
        points.append((v, sc, settings))
    root = output_dir(args.out, points[0][2], f"sweep_{points[0][1].name}")
    tasks = [(i, sc, st, root / f"point_{i:03d}", args.binary) for i, (_, sc, st) in enumerate(points)]

    workers = args.workers or os.cpu_count() or 1
    if workers == 1 or len(tasks) == 1:
        results = [_sweep_point(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            results = list(pool.map(_sweep_point, tasks))
    results.sort(key=lambda r: r[0])

    root.mkdir(parents=True, exist_ok=True)
    header = ["index", param, "tan2_theta", "cos_2phi", "v_fit", "v_fit_err", "v_analytic",
              "relative_error", "status", "message"]
    worst = EXIT_OK
    with open(root / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for (idx, summary, code, msg), (value, _, _) in zip(results, points):
            if summary is None:
                w.writerow([idx, value, "", "", "", "", "", "", "failed", msg])
                worst = max(worst, code)
                continue
            ana = summary["analytic_velocity"]
            fit = summary["analysis"]["velocity"]
            v_fit = fit.get("params", {}).get("velocity", math.nan)
            v_err = fit.get("errors", {}).get("velocity", math.nan)
            v_an = ana["v"]
            rel = abs(v_fit - v_an) / abs(v_an) if v_an else math.nan
            nums = (ana["tan2_theta"], ana["cos_2phi"], v_fit, v_err, v_an, rel)
            w.writerow([idx, value, *("" if x is None else repr(float(x)) for x in nums), "ok", ""])
    n_fail = sum(1 for r in results if r[1] is None)
    print(f"sweep over {param}: {len(results) - n_fail}/{len(results)} points ok; wrote {root / 'sweep.csv'}")
    return worst


def _toml_literal(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if isinstance(v, str):
        return json.dumps(v)
    return repr(v)


def cmd_compare(args) -> int:
    a = io.read_record(args.record_a)
    b = io.read_record(args.record_b)
    window = tuple(args.window) if args.window else None
    try:
        diff = analysis.compare_records(a, b, window)
    except ValueError as exc:
        raise io.ConfigError(f"cannot compare records: {exc}") from None
    report = {"record_a": str(args.record_a), "record_b": str(args.record_b), "rms": diff.rms,
              "max_abs": diff.max_abs, "n_frames": int(len(diff.times)), "notes": diff.notes}
    print(json.dumps(report, indent=2))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "compare.json").write_text(json.dumps(io.to_jsonable(report), indent=2) + "\n")
        with open(out / "per_frame.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_us", "rms"])
            for t, r in zip(diff.times, diff.per_frame_rms):
                w.writerow([repr(float(t)), repr(float(r))])
    return EXIT_OK


def _rows(text: str | None):
    if not text:
        return None
    try:
        r0, r1 = (int(x) for x in text.split(":"))
    except ValueError:
        raise io.ConfigError("expected START:STOP", "--rows") from None
    return r0, r1


def analyze_images(i_out, i_0, rows=None, n_bins=200) -> dict:
    od = analysis.optical_depth_image(i_out, i_0)
    profile = analysis.integrate_rows(od.d_image, rows)
    result = {"shape": list(od.d_image.shape), "saturated_pixels": int(od.saturated.sum()),
              "profile": profile.tolist()}
    positive = np.clip(profile, 0.0, None)
    binning = analysis.equal_atom_binning(positive, min(n_bins, profile.size))
    binned = binning.apply(profile)
    result["bin_edges"] = binning.edges.tolist()
    result["binned_profile"] = binned.tolist()
    result["xi_centers"] = binning.centers(positive).tolist()
    fit = analysis.gaussian_profile_fit(np.arange(profile.size, dtype=float), profile)
    result["gaussian_fit_pixels"] = fit.to_dict()
    return result


def cmd_analyze(args) -> int:
    if args.record:
        record = io.read_record(args.record)
        summary_path = Path(args.record) / "summary.json" if Path(args.record).is_dir() else None
        windows = {}
        if summary_path is not None and summary_path.exists():
            stored = json.loads(summary_path.read_text())
            windows = {k: tuple(v) if v else None for k, v in stored.get("windows_us", {}).items()}
        result = analysis.summarize_record(record, **windows)
    elif args.image_out or args.image_ref:
        if not (args.image_out and args.image_ref):
            raise io.ConfigError("image analysis needs both --image-out and --image-ref")
        for p in (args.image_out, args.image_ref):
            if not Path(p).exists():
                raise FileNotFoundError(f"image not found: {p}")
        i_out = io.read_image(args.image_out)
        i_0 = io.read_image(args.image_ref)
        try:
            result = analyze_images(i_out, i_0, _rows(args.rows), args.bins)
        except ValueError as exc:
            raise io.ConfigError(f"{args.image_out}: {exc}") from None
    else:
        raise io.ConfigError("analyze needs --record or --image-out/--image-ref")
    text = json.dumps(io.to_jsonable(result), indent=2, sort_keys=True) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "analysis.json").write_text(text)
        print(f"wrote {out / 'analysis.json'}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_list(args) -> int:
    for name in sorted(scenarios.PRESETS):
        doc = (scenarios.PRESETS[name].__doc__ or "").strip().splitlines()[0].replace("``", "")
        print(f"{name:28s} {doc}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eitlab", description="Counter-propagating EIT Maxwell-Bloch simulations")
    p.add_argument("--version", action="version", version=f"eitlab {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="TOML run configuration")
            sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                            help="dotted config key, value as a TOML literal (repeatable)")
            sp.add_argument("--binary", action="store_true", help="also write record.bin")
        sp.add_argument("--out", help=f"output directory (default: ${OUTPUT_ROOT_ENV}/<name>)")

    r = sub.add_parser("run", help="run one scenario")
    common(r)
    r.add_argument("--scenario", help="preset name, when no --config is given")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a parameter sweep from a config's [sweep] table")
    common(s)
    s.add_argument("--workers", type=int, default=None, help="worker processes (default: CPU count)")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("compare", help="RMS difference of two records")
    c.add_argument("record_a")
    c.add_argument("record_b")
    c.add_argument("--window", type=float, nargs=2, metavar=("T0", "T1"))
    common(c, config=False)
    c.set_defaults(func=cmd_compare)

    a = sub.add_parser("analyze", help="analyse a record or an absorption image pair")
    a.add_argument("--record", help="run directory or record file")
    a.add_argument("--image-out", help="image with atoms (text matrix or PGM)")
    a.add_argument("--image-ref", help="reference image without atoms")
    a.add_argument("--rows", help="transverse row range START:STOP to integrate")
    a.add_argument("--bins", type=int, default=200)
    common(a, config=False)
    a.set_defaults(func=cmd_analyze)

    ls = sub.add_parser("list-scenarios", help="list preset scenarios")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except io.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverInstability as exc:
        print(f"solver instability: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
