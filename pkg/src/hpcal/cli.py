"""Command-line entry point: ``hpcal <command> ...``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

from . import demo, dsp, report, wavio
from .calibrate import FailureReason, SchemaVersionError, SessionConfig, run_session, session_gains
from .manifest import (
    ManifestError,
    atomic_write_text,
    default_path,
    load_manifest,
    load_rig,
    load_session,
    save_session,
)
from .rig import HeadroomError, simulate_ocv_session
from .sensitivity import ReferenceTone, headphones_db_per_volt, required_voltage

log = logging.getLogger("hpcal")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_PARTIAL = 3
EXIT_HEADROOM = 4


def _emit(text: str, out: str | None) -> None:
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def _manifest_path(args) -> Path:
    return Path(args.manifest) if args.manifest else default_path("manifest.json")


def _rig_for(args, manifest):
    path = args.rig or manifest.rig_path
    if path is None:
        raise ManifestError("no rig file given (use --rig or set 'rig' in the manifest)")
    return load_rig(path)


def _load_tracks(manifest):
    return [
        wavio.load_track(e.path, e.track_id, e.cal_constant_db, e.nominal_laeq_db)
        for e in manifest.tracks
    ]


def cmd_ocv_voltage(args) -> int:
    try:
        spec = headphones_db_per_volt(args.sensitivity, args.impedance, args.unit)
    except ValueError as exc:
        args.parser.error(str(exc))
    volts = required_voltage(ReferenceTone(args.ref_spl, args.ref_freq), spec)
    print(f"{volts:.4f} V")
    return EXIT_OK


def _level_text(value):
    if value is None or math.isinf(value):
        return ""
    return report.format_level(value)


def cmd_analyze(args) -> int:
    manifest = load_manifest(_manifest_path(args))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["track_id", "L_left", "L_right", "L_eq", "L_nom", "D", "error"])
    failed = 0
    for entry in manifest.tracks:
        try:
            track = wavio.load_track(entry.path, entry.track_id, entry.cal_constant_db, entry.nominal_laeq_db)
        except (wavio.AudioFormatError, ValueError) as exc:
            failed += 1
            writer.writerow([entry.track_id, "", "", "", _level_text(entry.nominal_laeq_db), "", str(exc)])
            continue
        pair = dsp.channel_laeq(track)
        level = dsp.energetic_average(pair)
        d = None if math.isinf(level) else level - entry.nominal_laeq_db
        writer.writerow([
            entry.track_id, _level_text(pair.left_db), _level_text(pair.right_db),
            _level_text(level), _level_text(entry.nominal_laeq_db), _level_text(d),
            "silent" if math.isinf(level) else "",
        ])
        if math.isinf(level):
            failed += 1
    _emit(buf.getvalue(), args.out)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_calibrate(args) -> int:
    manifest = load_manifest(_manifest_path(args))
    rig = _rig_for(args, manifest)
    base = manifest.session
    config = SessionConfig(
        tolerance_db=args.tolerance if args.tolerance is not None else base.tolerance_db,
        run_count=args.runs if args.runs is not None else base.run_count,
        seed=args.seed if args.seed is not None else base.seed,
        reposition_db=args.reposition if args.reposition is not None else base.reposition_db,
        max_iter=base.max_iter,
    )
    tracks = _load_tracks(manifest)
    session = run_session(rig, tracks, None, config)
    save_session(args.out, session)

    summary = session_gains(session)
    print(f"session written to {args.out}")
    print(f"{len(summary.tracks)} of {len(session.track_ids)} tracks converged in all {config.run_count} runs")
    for track_id, gain in summary.tracks.items():
        print(f"  {track_id}: gain {gain.mean_gain_db:+.2f} dB (spread {gain.spread_db:.2f} dB)")
    headroom = False
    for track_id, reasons in summary.failed.items():
        print(f"  FAILED {track_id}: {', '.join(reasons)}")
        headroom = headroom or FailureReason.HEADROOM_EXCEEDED.value in reasons
    if headroom:
        return EXIT_HEADROOM
    return EXIT_PARTIAL if summary.failed else EXIT_OK


def cmd_simulate_ocv(args) -> int:
    manifest = load_manifest(_manifest_path(args))
    rig = _rig_for(args, manifest)
    tracks = _load_tracks(manifest)
    ref = ReferenceTone(
        args.ref_spl if args.ref_spl is not None else manifest.reference_tone.spl_dbspl,
        args.ref_freq if args.ref_freq is not None else manifest.reference_tone.frequency_hz,
    )
    calibrated, results = simulate_ocv_session(rig, tracks, ref)
    log.info("analog gain set to %.4f", calibrated.analog_gain)
    levels = [
        report.TrackLevels(t.track_id, t.nominal_laeq_db, ocv_dba=r.measured_laeq_dba)
        for t, r in zip(tracks, results)
    ]
    rep = report.summarize(levels, args.exclude or None)
    _emit(report.render(rep, args.format), args.out)
    flagged = [r for r in results if r.flags]
    for r in flagged:
        print(f"{r.track_id}: {', '.join(sorted(r.flags))}", file=sys.stderr)
    return EXIT_PARTIAL if flagged else EXIT_OK


def _read_report_inputs(paths):
    """Merge levels from session JSON and levels CSV files by track_id."""
    merged: dict[str, dict] = {}
    auto_exclusions = {}
    for path in paths:
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix.lower() == ".json":
            session = load_session(path)
            levels = report.levels_from_session(session)
            for track_id in session.track_ids:
                bad = [r.failure_reason.value for r in session.runs_for(track_id) if not r.converged]
                if bad:
                    auto_exclusions[track_id] = "calibration failed: " + ", ".join(sorted(set(bad)))
        else:
            levels = report.parse_levels_csv(text)
        for lv in levels:
            row = merged.setdefault(lv.track_id, {"nominal_dba": lv.nominal_dba})
            if lv.ocv_dba is not None:
                row["ocv_dba"] = lv.ocv_dba
            if lv.hats_dba is not None:
                row["hats_dba"] = lv.hats_dba
    rows = [report.TrackLevels(track_id, **vals) for track_id, vals in merged.items()]
    return rows, auto_exclusions


def cmd_report(args) -> int:
    if args.golden:
        rows, exclusions = report.golden_levels(), {}
    elif args.inputs:
        rows, exclusions = _read_report_inputs(args.inputs)
    else:
        args.parser.error("give input files or --golden")
    for track_id in args.exclude or ():
        exclusions[track_id] = "excluded on request"
    rep = report.summarize(rows, exclusions)
    _emit(report.render(rep, args.format), args.out)
    if args.format == "csv":
        for method in report.METHODS:
            for include in (True, False) if rep.exclusions else (True,):
                st = rep.stats(method, include)
                if st is not None:
                    label = "all" if include else "without excluded"
                    print(f"|D_{method}| {label}: n={st.count} min={st.min:.2f} max={st.max:.2f} "
                          f"mean={st.mean:.3f} std={st.std:.3f}", file=sys.stderr)
    return EXIT_OK


def cmd_demo(args) -> int:
    path = demo.write_demo(args.outdir, args.rate, args.seconds, args.seed, args.wav_format)
    print(f"demo dataset written; manifest at {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hpcal", description="Headphone playback calibration toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ocv-voltage", help="RMS voltage for the open-circuit-voltage method")
    p.add_argument("--sensitivity", type=float, required=True)
    p.add_argument("--unit", choices=("dbv", "dbmw"), default="dbv")
    p.add_argument("--impedance", type=float)
    p.add_argument("--ref-spl", type=float, default=94.0)
    p.add_argument("--ref-freq", type=float, default=1000.0)
    p.set_defaults(func=cmd_ocv_voltage, parser=p)

    def add_manifest(p):
        p.add_argument("--manifest", help="dataset manifest (default: $HPCAL_CONFIG_DIR/manifest.json)")

    p = sub.add_parser("analyze", help="A-weighted levels of the tracks in a manifest")
    add_manifest(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze, parser=p)

    p = sub.add_parser("calibrate", help="gain-search calibration on a simulated rig")
    add_manifest(p)
    p.add_argument("--rig")
    p.add_argument("--out", default="session.json")
    p.add_argument("--tolerance", type=float)
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--reposition", type=float, help="half-width of the reseating offset in dB")
    p.set_defaults(func=cmd_calibrate, parser=p)

    p = sub.add_parser("simulate-ocv", help="OCV calibration followed by fixed-gain measurement")
    add_manifest(p)
    p.add_argument("--rig")
    p.add_argument("--ref-spl", type=float)
    p.add_argument("--ref-freq", type=float)
    p.add_argument("--format", choices=("csv", "md"), default="csv")
    p.add_argument("--exclude", action="append")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate_ocv, parser=p)

    p = sub.add_parser("report", help="deviation table from sessions and level files")
    p.add_argument("inputs", nargs="*", help="session .json and/or levels .csv files")
    p.add_argument("--golden", action="store_true", help="use the bundled published table")
    p.add_argument("--format", choices=("csv", "md"), default="csv")
    p.add_argument("--exclude", action="append")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report, parser=p)

    p = sub.add_parser("demo", help="write the synthetic demo dataset")
    p.add_argument("outdir")
    p.add_argument("--rate", type=int, choices=dsp.SUPPORTED_RATES, default=48000)
    p.add_argument("--seconds", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--wav-format", choices=("pcm16", "pcm24", "float32"), default="pcm24")
    p.set_defaults(func=cmd_demo, parser=p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ManifestError, SchemaVersionError, HeadroomError, wavio.AudioFormatError,
            ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"hpcal: error: {exc}", file=sys.stderr)
        return EXIT_HEADROOM if isinstance(exc, HeadroomError) else EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
