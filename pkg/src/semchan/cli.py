"""``semchan`` command line.

Exit codes: 0 success, 1 runtime failure (including failed validation
checks), 2 invalid input (usage, parse or validation errors).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, io
from .analyzer import DbscanParams, DepthTable, analyze_pdp
from .behavior import TransitionMatrixError
from .distributions import DistributionError
from .events import ConfigError, EventScript

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2

log = logging.getLogger("semchan")


class InputError(Exception):
    pass


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _manifest(out_dir: Path, command, started, inputs: dict, outputs: list, seed=None, extra=None):
    doc = {
        "format": "semchan/manifest",
        "version": 1,
        "tool_version": __version__,
        "command": command,
        "seed": seed,
        "started_utc": started,
        "finished_utc": _now(),
        "inputs": {k: {"path": str(p), "sha256": io.file_sha256(p)} for k, p in inputs.items() if p},
        "outputs": {Path(p).name: io.file_sha256(p) for p in outputs},
    }
    if extra:
        doc.update(extra)
    return io.write_json_report(out_dir / "manifest.json", doc)


# -- generate ---------------------------------------------------------------------

def cmd_generate(args) -> int:
    from .generator import generate, realization_stats, run_seeds, truth_depths

    started = _now()
    cfg, lib_paths = io.load_config(args.config)
    script = io.load_event_script(args.script) if args.script else \
        EventScript.from_sequence(["straight"], [args.snapshots])
    seed = args.seed if args.seed is not None else (cfg.seed if cfg.seed is not None else script.seed)
    seed = 0 if seed is None else int(seed)
    out = Path(args.out_dir)
    seeds = run_seeds(seed, args.runs) if args.runs > 1 else [seed]
    for k, s in enumerate(seeds):
        run_dir = out if args.runs == 1 else out / f"run_{k:04d}"
        run_dir.mkdir(parents=True, exist_ok=True)
        r = generate(script, cfg, s)
        files = [
            io.write_cir(run_dir / "cir.csv", r),
            io.write_pdp(run_dir / "pdp.csv", r.pdp_matrix(), r.delay_bin),
            io.write_events(run_dir / "events.csv", r.meta["event_map"]),
            io.write_depth_table(run_dir / "depth_table.csv", truth_depths(r)),
            io.write_json_report(run_dir / "stats.json", realization_stats(r).to_dict()),
        ]
        inputs = {"script": args.script, "config": args.config,
                  "status_library": lib_paths["status"], "behavior_library": lib_paths["behavior"],
                  "event_matrices": lib_paths["events"]}
        _manifest(run_dir, ["generate"] + args.argv, started, inputs, files, s,
                  {"n_snapshots": len(r), "delay_bin_ns": r.delay_bin, "snapshot_rate_hz": r.snapshot_rate})
        print(f"{run_dir}: {len(r)} snapshots, seed {s}")
    return EXIT_OK


# -- analyze ----------------------------------------------------------------------

def cmd_analyze(args) -> int:
    started = _now()
    data = io.read_pdp(args.pdp)
    depth = None
    if args.depth_table:
        try:
            depth = DepthTable(io.read_depth_table(args.depth_table), args.d_max)
        except ValueError as err:
            raise InputError(f"{args.depth_table}: {err}") from None
    params = DbscanParams(args.eps, args.min_pts, args.delay_weight, args.power_weight)
    res = analyze_pdp(data.pdp, data.grid, depth_table=depth, params=params,
                      noise_floor_db=args.noise_floor, wavelength_m=args.wavelength,
                      two_way=args.two_way, snapshot_index=data.snapshots, workers=args.workers)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = res.to_dict()
    report["dbscan"] = {"eps": params.eps, "min_pts": params.min_pts,
                        "delay_weight": params.delay_weight, "power_weight": params.power_weight}
    files = [io.write_labeled_clusters(out / "labeled_clusters.csv", res.clusters, data.delay_bin),
             io.write_json_report(out / "metrics.json", report)]
    _manifest(out, ["analyze"] + args.argv, started, {"pdp": args.pdp, "depth_table": args.depth_table}, files)
    print(f"{out}: {len(res.clusters)} clusters over {data.pdp.shape[0]} snapshots")
    return EXIT_OK


# -- fit --------------------------------------------------------------------------

def cmd_fit(args) -> int:
    from .fitting import FitReport, fit_behavior_library, fit_event_matrices, fit_status_library

    started = _now()
    delay_bin, clusters = io.read_labeled_clusters(args.labeled_clusters)
    if not clusters:
        raise InputError(f"{args.labeled_clusters}: no clusters")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = FitReport()
    kw = {"wavelength_m": args.wavelength, "two_way": args.two_way}
    try:
        lib = fit_status_library(clusters, delay_bin, min_clusters=args.min_clusters, report=report, **kw)
    except ValueError as err:
        raise InputError(str(err)) from None
    files = [io.save_status_library(lib, out / "status_library.json")]
    if args.events:
        track = io.read_events(args.events)
        try:
            blib = fit_behavior_library(clusters, track, delay_bin, report=report, **kw)
            files.append(io.save_behavior_library(blib, out / "behavior_library.json"))
        except ValueError as err:
            report.warn(f"behavior library not written: {err}")
        em = fit_event_matrices(clusters, track, delay_bin, mode=args.event_mode, **kw)
        files.append(io.save_event_matrices(em, out / "event_matrices.json"))
    else:
        report.warn("no --events annotation: behavior library and event matrices not fitted")
    files.append(io.write_json_report(out / "fit_report.json", report.to_dict()))
    _manifest(out, ["fit"] + args.argv, started,
              {"labeled_clusters": args.labeled_clusters, "events": args.events}, files)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"{out}: {len(lib.labels)} status profiles")
    return EXIT_OK


# -- validate ---------------------------------------------------------------------

def cmd_validate(args) -> int:
    from .validation import SUITES, run_suite

    names = SUITES if args.suite == "all" else (args.suite,)
    reports = [run_suite(n) for n in names]
    for rep in reports:
        print(f"[{rep.suite}] {rep.seconds:.1f} s")
        for c in rep.checks:
            print("  " + c.line())
    doc = {"format": "semchan/validation-report", "tool_version": __version__,
           "passed": all(r.passed for r in reports), "suites": [r.to_dict() for r in reports]}
    if args.report:
        io.write_json_report(args.report, doc)
    if args.json:
        print(json.dumps(doc, indent=2))
    return EXIT_OK if doc["passed"] else EXIT_RUNTIME


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    from .validation import SUITES

    p = argparse.ArgumentParser(prog="semchan", description="Semantic vehicular channel generator and analyzer.")
    p.add_argument("--version", action="version", version=f"semchan {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a channel realization from an event script")
    g.add_argument("--script", help="event script JSON (default: one straight segment)")
    g.add_argument("--snapshots", type=int, default=100, help="snapshots when no script is given")
    g.add_argument("--config", help="generator config JSON")
    g.add_argument("--out-dir", required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--runs", type=int, default=1, help="independent realizations (seed XOR run index)")
    g.set_defaults(func=cmd_generate)

    a = sub.add_parser("analyze", help="cluster and label a PDP file")
    a.add_argument("--pdp", required=True)
    a.add_argument("--depth-table")
    a.add_argument("--out-dir", required=True)
    a.add_argument("--eps", type=float, default=DbscanParams.eps)
    a.add_argument("--min-pts", type=int, default=DbscanParams.min_pts)
    a.add_argument("--delay-weight", type=float, default=DbscanParams.delay_weight)
    a.add_argument("--power-weight", type=float, default=DbscanParams.power_weight)
    a.add_argument("--noise-floor", type=float, help="noise floor in dB (default: estimated)")
    a.add_argument("--d-max", type=float, default=50.0, help="depth range in m")
    a.add_argument("--wavelength", type=float, help="carrier wavelength in m (default 28 GHz)")
    a.add_argument("--two-way", action="store_true", help="free-space normalization over c*tau/2")
    a.add_argument("--workers", type=int, default=1)
    a.set_defaults(func=cmd_analyze)

    f = sub.add_parser("fit", help="fit libraries from labeled clusters")
    f.add_argument("--labeled-clusters", required=True)
    f.add_argument("--events", help="per-snapshot behavior annotation (events.csv from generate)")
    f.add_argument("--out", required=True, help="output directory for library files")
    f.add_argument("--min-clusters", type=int, default=30)
    f.add_argument("--event-mode", choices=("presence", "directional", "auto"), default="auto")
    f.add_argument("--wavelength", type=float, default=None)
    f.add_argument("--two-way", action="store_true")
    f.set_defaults(func=cmd_fit)

    v = sub.add_parser("validate", help="run built-in validation suites")
    v.add_argument("--suite", choices=SUITES + ("all",), default="all")
    v.add_argument("--report", help="write a JSON report here")
    v.add_argument("--json", action="store_true", help="also print the JSON report")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.argv = argv[argv.index(args.command) + 1:] if args.command in argv else argv
    if getattr(args, "wavelength", None) is None and hasattr(args, "wavelength"):
        from .status import DEFAULT_WAVELENGTH_M
        args.wavelength = DEFAULT_WAVELENGTH_M
    try:
        return args.func(args)
    except (io.FormatError, InputError, ConfigError, TransitionMatrixError, DistributionError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as err:
        print(f"error: {err.filename}: no such file", file=sys.stderr)
        return EXIT_INVALID
    except KeyError as err:
        print(f"error: {err.args[0] if err.args else err}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as err:  # noqa: BLE001
        log.debug("unhandled", exc_info=True)
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
