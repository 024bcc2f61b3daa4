"""bdm command line: analyze captures, simulate traces, report rates, inspect the database.

Exit status: 0 clean, 1 error, 2 analysis finished and raised alerts.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import metrics, store
from .detector import DetectorConfig
from .ingest import CaptureSource, IngestError, read_capture
from .sim import SimConfig, default_pool, read_labels, simulate_to_files
from .windowing import DEFAULT_INTERVAL_S, DEFAULT_MONITOR_S, WindowConfig, build_blocks, split_periods


EXIT_OK, EXIT_ERROR, EXIT_ALERTS = 0, 1, 2
DEFAULT_DB = "bdm-db"


class CliError(Exception):
    pass


def _defaults_line(window: WindowConfig, cfg: DetectorConfig) -> str:
    return (f"config: interval={window.interval_len_s:g}s tm={window.monitor_duration_s:g}s "
            f"threshold={float(cfg.threshold):g} group_min={cfg.group_min} "
            f"repeat_min={cfg.repeat_min} periodicity_tol={cfg.periodicity_tolerance:g}"
            + (" strict" if cfg.strict_single_host else ""))


def cmd_analyze(args) -> int:
    window = WindowConfig(args.tm, args.interval)
    cfg = DetectorConfig(threshold=args.threshold, group_min=args.group_min, repeat_min=args.repeat_min,
                         periodicity_tolerance=args.periodicity_tol, strict_single_host=args.strict)
    if args.pcap:
        source = CaptureSource.pcap(args.pcap)
    else:
        source = CaptureSource.event_log(args.events)
    if not source.path.is_file():
        raise CliError(f"input not found: {source.path}")

    result = read_capture(source)
    events = result.events
    if result.skipped:
        skipped = ", ".join(f"{k}={v}" for k, v in sorted(result.skipped.items()))
        print(f"skipped packets: {result.skipped_total} ({skipped})")
    if result.violations:
        print(f"invalid lines: {len(result.violations)} (first at line {result.violations[0][0]})")

    state = store.load(args.db, cfg)
    alerts = []
    periods = split_periods(events, window.monitor_duration_s, window.interval_len_s)
    for period_cfg, period_events in periods:
        summary = build_blocks(period_events, period_cfg)
        alerts.extend(state.process_window(summary))

    state.record_run(str(source.path), len(periods), len(events), alerts,
                     {"interval_s": window.interval_len_s, "tm_s": window.monitor_duration_s})
    store.persist(state, args.db)
    store.append_alerts(args.db, alerts)

    for a in alerts:
        score = "" if a.score is None else f" score={a.score:.3f}"
        print(f"ALERT {a.kind.value} {a.qname}{score} hosts={len(a.macs)}")
    n_domains = len({e.qname for e in events})
    print(f"domains seen: {n_domains}  abnormal: {len(state.abnormal_domains())}  "
          f"alerts emitted: {len(alerts)}  events: {len(events)}  periods: {len(periods)}")
    print(_defaults_line(window, cfg))
    return EXIT_ALERTS if alerts else EXIT_OK


def cmd_simulate(args) -> int:
    if args.pool < 1:
        raise CliError("--pool must be >= 1")
    config = SimConfig(
        bot_count=args.bots, bot_domain=args.domain, bot_period_s=args.period,
        legit_count=args.legit, legit_domain_pool=default_pool(args.pool),
        legit_rate_per_host=args.rate, duration_s=args.tm, seed=args.seed,
        precheck_host=args.precheck, precheck_repeats=args.repeat_min, start_ts=args.start,
    )
    out = Path(args.out)
    labels = Path(args.labels) if args.labels else out.with_name("labels.jsonl")
    if labels.resolve() == out.resolve():
        raise CliError("--labels and --out point at the same file")
    out.parent.mkdir(parents=True, exist_ok=True)
    labels.parent.mkdir(parents=True, exist_ok=True)
    n_events, n_labels = simulate_to_files(config, out, labels)
    print(f"wrote {n_events} events to {out} and {n_labels} labels to {labels} (seed {config.seed})")
    return EXIT_OK


def _rates_entry(counts: metrics.EvaluationCounts) -> dict:
    entry = {"counts": counts.to_dict()}
    if counts.total_detected == 0:
        entry["status"] = "no_detections"
        return entry
    fpr, dr = metrics.false_positive_rate(counts), metrics.detection_rate(counts)
    entry.update({
        "false_positive_rate": round(fpr, 3), "detection_rate": round(dr, 3),
        "fpr_percent": metrics.as_percent(fpr), "dr_percent": metrics.as_percent(dr),
    })
    return entry


def build_report(state, labels, label_paths=()) -> dict:
    db_counts = metrics.count_outcomes(state.domains, labels)
    runs = []
    fprs, drs = [], []
    for run in state.runs:
        counts = metrics.count_qnames(run.detected, labels)
        entry = {"run": run.run, "input": run.input, "detected": sorted(run.detected),
                 "config": run.config, **_rates_entry(counts)}
        runs.append(entry)
        if counts.total_detected:
            fprs.append(metrics.false_positive_rate(counts))
            drs.append(metrics.detection_rate(counts))
    report = {
        "note": metrics.RATE_NOTE,
        "labels": [str(p) for p in label_paths],
        "database": _rates_entry(db_counts),
        "runs": runs,
        "averages": None,
        "config": state.runs[-1].config if state.runs else state.config.to_dict(),
    }
    if fprs:
        afpr, adr = metrics.average_rate(fprs), metrics.average_rate(drs)
        report["averages"] = {
            "runs_averaged": len(fprs),
            "false_positive_rate": round(afpr, 3), "detection_rate": round(adr, 3),
            "fpr_percent": metrics.as_percent(afpr), "dr_percent": metrics.as_percent(adr),
        }
    return report


def cmd_report(args) -> int:
    labels = {}
    for path in args.labels:
        for qname, truth in read_labels(path).items():
            if labels.get(qname, truth) is not truth:
                raise CliError(f"conflicting labels for {qname} across label files")
            labels[qname] = truth
    state = store.load(args.db)
    try:
        report = build_report(state, labels, args.labels)
    except metrics.MissingLabel as e:
        print("error: unlabeled abnormal domains:", file=sys.stderr)
        for q in e.qnames:
            print(f"  {q}", file=sys.stderr)
        return EXIT_ERROR

    out = Path(args.out) if args.out else Path(args.db) / "report.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    for run in report["runs"]:
        if "status" in run:
            print(f"run {run['run']}: no detections")
        else:
            print(f"run {run['run']}: FPR {run['fpr_percent']}% / DR {run['dr_percent']}%")
    db = report["database"]
    c = db["counts"]
    if "status" in db:
        print("NoDetections: no abnormal domains in the database; rates undefined")
    else:
        print(f"database: T_p={c['true_positives']} F_p={c['false_positives']} T_N={c['total_detected']}")
        print(f"FPR {db['fpr_percent']}% / DR {db['dr_percent']}%")
    if report["averages"]:
        av = report["averages"]
        print(f"average over {av['runs_averaged']} run(s): FPR {av['fpr_percent']}% / DR {av['dr_percent']}%")
    print(f"note: {metrics.RATE_NOTE}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_db(args) -> int:
    if args.action == "clear":
        if not args.yes:
            print("refusing to clear the database without --yes", file=sys.stderr)
            return EXIT_ERROR
        removed = store.clear(args.db)
        print(f"removed {len(removed)} file(s) from {args.db}")
        return EXIT_OK

    state = store.load(args.db)
    if not state.domains and not state.blacklist:
        print("empty database")
        return EXIT_OK
    for qname in sorted(state.domains):
        r = state.domains[qname]
        score = "-" if r.best_score is None else f"{r.best_score:.3f}"
        print(f"{qname}\t{r.cls.value}\t{score}\t{r.source.value}\t{r.first_seen_ts:g}\t{r.last_seen_ts:g}")
    for mac in sorted(state.blacklist):
        e = state.blacklist[mac]
        print(f"blacklist\t{mac}\t{e.implicating_qname}\t{e.added_ts:g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--db", default=os.environ.get("BDM_DB", DEFAULT_DB),
                        help="database directory (default: $BDM_DB or ./%(default)s)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="bdm", description="Botnet detection from DNS query traffic.")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[common], help="classify domains in a capture")
    src = a.add_mutually_exclusive_group(required=True)
    src.add_argument("--pcap", help="classic pcap file (Ethernet)")
    src.add_argument("--events", help="JSON-lines event log")
    a.add_argument("--interval", type=float, default=DEFAULT_INTERVAL_S, help="interval length, seconds")
    a.add_argument("--tm", type=float, default=DEFAULT_MONITOR_S, help="monitoring period, seconds")
    a.add_argument("--threshold", type=str, default="0.8", help="Jaccard threshold for abnormal")
    a.add_argument("--group-min", type=int, default=2, help="distinct MACs that make a host block")
    a.add_argument("--repeat-min", type=int, default=3, help="queries needed for single-host periodicity")
    a.add_argument("--periodicity-tol", type=float, default=0.5,
                   help="max coefficient of variation of inter-query gaps")
    a.add_argument("--strict", action="store_true",
                   help="new single-host domains need blacklisted MAC AND periodic repeats")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", parents=[common], help="generate a labeled synthetic trace")
    s.add_argument("--bots", type=int, default=10)
    s.add_argument("--legit", type=int, default=20)
    s.add_argument("--period", type=float, default=60.0, help="bot query period, seconds")
    s.add_argument("--tm", type=float, default=600.0, help="trace duration, seconds")
    s.add_argument("--pool", type=int, default=50, help="legitimate domain pool size")
    s.add_argument("--rate", type=float, default=0.5, help="legit queries per host per period")
    s.add_argument("--domain", default="www.xxx.com", help="bot C&C domain")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--precheck", action="store_true", help="add a lone pre-check host before the group")
    s.add_argument("--repeat-min", type=int, default=3, help="pre-check repeats")
    s.add_argument("--start", type=float, default=0.0, help="trace start timestamp")
    s.add_argument("--out", default="trace.jsonl")
    s.add_argument("--labels", default=None, help="labels file (default: labels.jsonl next to --out)")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", parents=[common], help="false-positive and detection rates")
    r.add_argument("--labels", action="append", required=True, help="labels file (repeatable)")
    r.add_argument("--out", default=None, help="report path (default: <db>/report.json)")
    r.set_defaults(func=cmd_report)

    d = sub.add_parser("db", parents=[common], help="list or clear the database")
    d.add_argument("action", choices=["list", "clear"])
    d.add_argument("--yes", action="store_true", help="confirm clear")
    d.set_defaults(func=cmd_db)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors; 2 is reserved for alerts here
        return EXIT_ERROR if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, IngestError, store.StoreError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
