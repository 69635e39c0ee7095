"""The `pse-lab` command: simulate, serve, analyze, curves, replay.

Every subcommand resolves its parameters as CLI flag > config file value >
built-in default, writes its artifacts into one output directory, and drops
a run manifest there recording the resolved parameters; rerunning with
`--config manifest.json` reproduces the artifacts byte for byte (serve, as
a long-running service, has no reproducibility contract).

Exit codes: 0 success, 1 runtime failure (including replay mismatches),
2 invalid flags or config.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from collections import Counter
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .curves import NON_CONSTANT_CURVES, CurveId, default_curves, final_second_ordering, sample_curves
from .observers import (
    REFERENCE_PSE_MEAN_S,
    REFERENCE_PSE_SD_S,
    ObserverModel,
    interval_responder,
    observer_seed,
    run_cohort,
    sample_cohort_truth,
)
from .protocol import (
    SessionConfig,
    SessionStore,
    SimClock,
    TrialPhase,
    rebuild_session,
    run_scripted_session,
    session_results,
)
from .stats import (
    PseTable,
    analyze_tables,
    ebr_table,
    pse_table_to_csv,
    read_blink_csv,
    render_report_text,
    summarize,
)

DATA_DIR_ENV = "PSE_LAB_DATA_DIR"

#: Replayed PSEs must match logged ones to this tolerance.
REPLAY_TOLERANCE_S = 1e-9

#: Spread of true PSEs in the null generator (no curve effect).
NULL_GENERATOR_SD_S = 0.35


class CliError(Exception):
    """Runtime failure: message to stderr, exit code 1."""


def _utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise CliError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise CliError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise CliError(f"config file {path} must hold a JSON object")
    # a run manifest carries its parameters under "parameters"
    if "parameters" in data and isinstance(data["parameters"], dict):
        return data["parameters"]
    return data


def _resolve(args: argparse.Namespace, config: dict, key: str, default):
    flag_value = getattr(args, key)
    if flag_value is not None:
        return flag_value
    if key in config:
        return config[key]
    return default


def _write_manifest(out_dir: Path, subcommand: str, parameters: dict,
                    artifacts: list[Path]) -> Path:
    manifest = {
        "tool": "pse-lab",
        "version": __version__,
        "subcommand": subcommand,
        "parameters": parameters,
        "seed": parameters.get("seed"),
        "created_at": _utc_now_iso(),
        "artifacts": sorted(str(p.relative_to(out_dir)) for p in artifacts),
    }
    path = out_dir / "manifest.json"
    with path.open("w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _out_dir(raw: str) -> Path:
    path = Path(raw)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-probe"
        probe.touch()
        probe.unlink()
    except OSError as exc:
        raise CliError(f"output directory {path} is not writable: {exc}")
    return path


def _default_data_dir(args: argparse.Namespace, config: dict) -> str:
    resolved = _resolve(args, config, "data_dir", None)
    if resolved is not None:
        return resolved
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        return env
    return "pse-lab-data"


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _cmd_simulate(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    config = _load_config(args.config)
    cohort = int(_resolve(args, config, "cohort", 20))
    trials = int(_resolve(args, config, "trials", 40))
    seed = int(_resolve(args, config, "seed", 0))
    out = _resolve(args, config, "out", "pse-lab-out")
    null = bool(_resolve(args, config, "null", False))
    emit_sessions = bool(_resolve(args, config, "emit_sessions", False))
    figures = bool(_resolve(args, config, "figures", True))
    if cohort < 1:
        parser.error(f"--cohort must be >= 1, got {cohort}")
    if trials < 1:
        parser.error(f"--trials must be >= 1, got {trials}")

    if null:
        means = {c: 5.0 for c in NON_CONSTANT_CURVES}
        sds = {c: NULL_GENERATOR_SD_S for c in NON_CONSTANT_CURVES}
    else:
        means = dict(REFERENCE_PSE_MEAN_S)
        sds = dict(REFERENCE_PSE_SD_S)

    out_dir = _out_dir(out)
    artifacts: list[Path] = []

    if emit_sessions:
        table, truth = _simulate_with_sessions(
            out_dir, cohort, trials, seed, means, sds, artifacts)
    else:
        result = run_cohort(cohort, means, sds, n_trials=trials, seed=seed)
        table, truth = result.table, result.truth

    table_path = out_dir / "pse_table.csv"
    pse_table_to_csv(table, table_path)
    artifacts.append(table_path)
    truth_path = out_dir / "pse_truth.csv"
    pse_table_to_csv(truth, truth_path)
    artifacts.append(truth_path)

    if figures and cohort >= 2:
        from .plotting import pse_means_figure, pse_table_figure
        artifacts.append(pse_means_figure(
            summarize(table), table.n, out_dir / "figures" / "pse_means.png"))
        artifacts.append(pse_table_figure(table, out_dir / "figures" / "pse_table.png"))

    parameters = {"cohort": cohort, "trials": trials, "seed": seed, "out": str(out),
                  "null": null, "emit_sessions": emit_sessions, "figures": figures}
    _write_manifest(out_dir, "simulate", parameters, artifacts)

    print(f"simulated {cohort} observers x {len(table.curves)} curves x {trials} trials "
          f"(seed {seed}{', null generator' if null else ''})")
    for curve in table.curves:
        col = table.column(curve)
        sd_text = f"{col.std(ddof=1):.3f}" if cohort >= 2 else "n/a"
        print(f"  {curve.value:<12} mean PSE {col.mean():.3f} s (sd {sd_text})")
    print(f"wrote {table_path}")
    return 0


def _simulate_with_sessions(out_dir, cohort, trials, seed, means, sds, artifacts):
    """Route every simulated observer through the full session protocol."""
    sessions_dir = out_dir / "sessions"
    store = SessionStore(sessions_dir)
    truths = sample_cohort_truth(cohort, means, sds, seed)
    curves = tuple(c for c in NON_CONSTANT_CURVES if c in means)
    estimates = np.empty((cohort, len(curves)))
    truth_values = np.empty((cohort, len(curves)))
    participants = []
    for idx in range(cohort):
        pid = f"sim{idx:03d}"
        participants.append(pid)
        observer = ObserverModel(true_pse_s=truths[idx],
                                 seed=observer_seed(seed, idx))
        session_config = SessionConfig(
            participant_id=pid,
            trials_per_curve=trials,
            seed=observer_seed(seed, idx),
        )
        session_dir = store.session_dir(pid)
        if session_dir.exists():
            raise CliError(f"refusing to overwrite existing session at {session_dir}")
        state = run_scripted_session(
            session_config, interval_responder(observer),
            store=store, session_id=pid, clock=SimClock(),
        )
        results = session_results(state)
        for j, curve in enumerate(curves):
            estimates[idx, j] = results.per_curve[curve].pse_s
            truth_values[idx, j] = truths[idx][curve]
        artifacts.append(session_dir / "manifest.json")
        artifacts.append(session_dir / "trials.jsonl")
    table = PseTable(tuple(participants), curves, estimates)
    truth = PseTable(tuple(participants), curves, truth_values)
    return table, truth


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------

def _cmd_serve(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    config = _load_config(args.config)
    bind = str(_resolve(args, config, "bind", "127.0.0.1:8000"))
    data_dir = _default_data_dir(args, config)
    host, sep, port_text = bind.rpartition(":")
    if not sep or not port_text.isdigit():
        parser.error(f"--bind must look like host:port, got {bind!r}")
    port = int(port_text)

    try:
        _out_dir(data_dir)
    except CliError as exc:
        raise CliError(f"data directory unusable: {exc}")

    import uvicorn

    from .service import build_app

    app = build_app(data_dir)
    print(f"serving on http://{host}:{port} (sessions in {data_dir})")
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except (OSError, SystemExit) as exc:
        raise CliError(f"server failed to start on {bind}: {exc}")
    return 0


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def _session_pse_rows(store: SessionStore):
    """(participant, session id, per-curve PSE) for each complete session."""
    rows = []
    skipped = []
    mu0 = None
    for session_id in store.list_sessions():
        manifest, records = store.load(session_id)
        cfg = manifest["config"]
        trials_per_curve = int(cfg["trials_per_curve"])
        if mu0 is None:
            mu0 = float(cfg["standard_duration_s"])
        mains = [r for r in records if r.phase is TrialPhase.MAIN]
        counts = Counter(r.curve for r in mains)
        complete = all(counts.get(CurveId(c), 0) == trials_per_curve
                       for c in manifest["curve_order"])
        if not complete or len(counts) != len(NON_CONSTANT_CURVES):
            skipped.append(session_id)
            continue
        pse = {}
        for curve in NON_CONSTANT_CURVES:
            last = max((r for r in mains if r.curve is curve), key=lambda r: r.trial_index)
            pse[curve] = last.posterior_mean_after
        rows.append((manifest["participant_id"], session_id, pse))
    return rows, skipped, (5.0 if mu0 is None else mu0)


def _cmd_analyze(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    config = _load_config(args.config)
    data_dir = _default_data_dir(args, config)
    out = _resolve(args, config, "out", "pse-lab-out")
    correction = str(_resolve(args, config, "correction", "holm"))
    blinks = _resolve(args, config, "blinks", None)
    figures = bool(_resolve(args, config, "figures", True))
    if correction not in ("holm", "bonferroni", "none"):
        parser.error(f"--correction must be holm, bonferroni, or none, got {correction!r}")
    if not Path(data_dir).is_dir():
        raise CliError(f"data directory not found: {data_dir}")

    store = SessionStore(data_dir)
    rows, skipped, mu0 = _session_pse_rows(store)
    if len(rows) < 2:
        raise CliError(
            f"need >= 2 complete sessions in {data_dir}, found {len(rows)} "
            f"({len(skipped)} incomplete)"
        )

    ids = [pid for pid, _, _ in rows]
    use_session_ids = len(set(ids)) != len(ids)
    participants = tuple(sid if use_session_ids else pid for pid, sid, _ in rows)
    values = np.array([[pse[c] for c in NON_CONSTANT_CURVES] for _, _, pse in rows])
    table = PseTable(participants, NON_CONSTANT_CURVES, values)

    # default blink file: <data-dir>/blinks.csv; silently absent is fine
    ebr = None
    blink_note = None
    if blinks is None:
        default_blinks = Path(data_dir) / "blinks.csv"
        if default_blinks.exists():
            blinks = str(default_blinks)
    if blinks is not None:
        try:
            ebr = ebr_table(read_blink_csv(blinks), table)
        except (OSError, ValueError) as exc:
            raise CliError(f"blink data unusable: {exc}")
    else:
        blink_note = "no blink CSV found; correlation section omitted"

    report = analyze_tables(table, ebr, mu0_s=mu0, correction=correction)
    if skipped:
        report.notes.append(f"skipped incomplete sessions: {', '.join(skipped)}")
    if blink_note:
        report.notes.append(blink_note)

    out_dir = _out_dir(out)
    artifacts = []
    table_path = out_dir / "pse_table.csv"
    pse_table_to_csv(table, table_path)
    artifacts.append(table_path)
    text = render_report_text(report)
    report_txt = out_dir / "report.txt"
    report_txt.write_text(text)
    artifacts.append(report_txt)
    report_json = out_dir / "report.json"
    with report_json.open("w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    artifacts.append(report_json)

    if figures:
        from .plotting import pse_means_figure, pse_table_figure
        artifacts.append(pse_means_figure(
            summarize(table), table.n, out_dir / "figures" / "pse_means.png",
            standard_s=mu0))
        artifacts.append(pse_table_figure(
            table, out_dir / "figures" / "pse_table.png", standard_s=mu0))

    parameters = {"data_dir": str(data_dir), "out": str(out), "correction": correction,
                  "blinks": None if blinks is None else str(blinks),
                  "figures": figures, "seed": None}
    _write_manifest(out_dir, "analyze", parameters, artifacts)

    sys.stdout.write(text)
    print(f"wrote {report_txt}")
    return 0


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------

def _cmd_curves(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    config = _load_config(args.config)
    samples = int(_resolve(args, config, "samples", 501))
    out = _resolve(args, config, "out", "pse-lab-out")
    figures = bool(_resolve(args, config, "figures", True))
    if samples < 2:
        parser.error(f"--samples must be >= 2, got {samples}")

    out_dir = _out_dir(out)
    artifacts = []
    rows = sample_curves(samples=samples)
    csv_path = out_dir / "curve_samples.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["curve", "u", "fraction", "velocity"])
        for curve, u, fraction, velocity in rows:
            writer.writerow([curve, repr(u), repr(fraction), repr(velocity)])
    artifacts.append(csv_path)

    if figures:
        from .plotting import progress_figure, velocity_figure
        specs = list(default_curves().values())
        artifacts.append(progress_figure(specs, out_dir / "figures" / "progress_curves.png"))
        artifacts.append(velocity_figure(specs, out_dir / "figures" / "velocity.png"))

    parameters = {"samples": samples, "out": str(out), "figures": figures, "seed": None}
    _write_manifest(out_dir, "curves", parameters, artifacts)

    ordering = final_second_ordering(include_constant=True)
    ranked = ", ".join(f"{cid.value}={v:.4f}" for cid, v in ordering)
    print(f"final-window mean velocity (descending): {ranked}")
    print(f"wrote {csv_path}")
    return 0


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------

def _cmd_replay(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    config = _load_config(args.config)
    data_dir = _default_data_dir(args, config)
    out = _resolve(args, config, "out", "pse-lab-out")
    if not Path(data_dir).is_dir():
        raise CliError(f"data directory not found: {data_dir}")

    store = SessionStore(data_dir)
    session_ids = store.list_sessions()
    if not session_ids:
        raise CliError(f"no sessions found in {data_dir}")

    out_dir = _out_dir(out)
    report_path = out_dir / "replay_report.csv"
    failures = 0
    rows_written = 0
    with report_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["session_id", "curve", "logged_pse_s", "rebuilt_pse_s",
                         "abs_diff_s", "status"])
        for session_id in session_ids:
            try:
                manifest, records = store.load(session_id)
                diffs = rebuild_session(manifest, records)
            except Exception as exc:
                writer.writerow([session_id, "", "", "", "", f"corrupt: {exc}"])
                failures += 1
                rows_written += 1
                continue
            for curve, diff in diffs.items():
                ok = diff.abs_diff_s <= REPLAY_TOLERANCE_S
                if not ok:
                    failures += 1
                writer.writerow([
                    session_id, curve.value, repr(diff.logged_pse_s),
                    repr(diff.rebuilt_pse_s), repr(diff.abs_diff_s),
                    "ok" if ok else "mismatch",
                ])
                rows_written += 1

    parameters = {"data_dir": str(data_dir), "out": str(out), "seed": None}
    _write_manifest(out_dir, "replay", parameters, [report_path])

    print(f"replayed {len(session_ids)} sessions, {rows_written} rows -> {report_path}")
    if failures:
        print(f"{failures} mismatching or corrupt entries "
              f"(tolerance {REPLAY_TOLERANCE_S:g} s)", file=sys.stderr)
        return 1
    print("all replayed estimates match the logged values")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pse-lab",
        description="Adaptive measurement of progress-bar duration perception.",
    )
    parser.add_argument("--version", action="version", version=f"pse-lab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file mirroring the flags (flags win)")
        p.add_argument("--seed", type=int, default=None, help="root random seed")
        p.add_argument("--out", default=None, help="output directory")

    p_sim = sub.add_parser("simulate", help="simulate observer cohorts")
    common(p_sim)
    p_sim.add_argument("--cohort", type=int, default=None, help="number of observers")
    p_sim.add_argument("--trials", type=int, default=None, help="trials per curve")
    p_sim.add_argument("--null", action="store_true", default=None,
                       help="null generator: all true PSEs at the standard")
    p_sim.add_argument("--emit-sessions", dest="emit_sessions", action="store_true",
                       default=None, help="persist full session logs via the protocol")
    p_sim.add_argument("--no-figures", dest="figures", action="store_false",
                       default=None, help="skip figure rendering")
    p_sim.set_defaults(func=_cmd_simulate)

    p_serve = sub.add_parser("serve", help="run the HTTP session service")
    p_serve.add_argument("--config", help="JSON file mirroring the flags (flags win)")
    p_serve.add_argument("--bind", default=None, help="host:port (default 127.0.0.1:8000)")
    p_serve.add_argument("--data-dir", dest="data_dir", default=None,
                         help=f"session log directory (default ${DATA_DIR_ENV})")
    p_serve.set_defaults(func=_cmd_serve)

    p_an = sub.add_parser("analyze", help="analyze persisted sessions")
    common(p_an)
    p_an.add_argument("--data-dir", dest="data_dir", default=None,
                      help=f"session log directory (default ${DATA_DIR_ENV})")
    p_an.add_argument("--blinks", default=None,
                      help="blink CSV (default <data-dir>/blinks.csv if present)")
    p_an.add_argument("--correction", choices=("holm", "bonferroni", "none"),
                      default=None, help="pairwise multiplicity correction")
    p_an.add_argument("--no-figures", dest="figures", action="store_false",
                      default=None, help="skip figure rendering")
    p_an.set_defaults(func=_cmd_analyze)

    p_cv = sub.add_parser("curves", help="export curve samples")
    common(p_cv)
    p_cv.add_argument("--samples", type=int, default=None, help="grid points per curve")
    p_cv.add_argument("--no-figures", dest="figures", action="store_false",
                      default=None, help="skip figure rendering")
    p_cv.set_defaults(func=_cmd_curves)

    p_rp = sub.add_parser("replay", help="verify logs by replaying the staircase")
    common(p_rp)
    p_rp.add_argument("--data-dir", dest="data_dir", default=None,
                      help=f"session log directory (default ${DATA_DIR_ENV})")
    p_rp.set_defaults(func=_cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    # find the subparser owning this subcommand so its error() formats usage
    try:
        return args.func(args, parser)
    except CliError as exc:
        print(f"pse-lab {args.subcommand}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
