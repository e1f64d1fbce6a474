"""Operator entry point.

Subcommands:
  analyze   - path-diversity report over a directory of GML topologies
  simulate  - run one scenario file (attack/defense experiment)
  sweep     - run a scenario across a parameter range, emit tidy CSV
  report    - render a finished run directory, or check confusion-matrix
              counts against externally claimed ratios

Exit codes: 0 success, 1 usage/config error, 2 partial failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import analysis
from .analysis import (DiversityReport, dataset_classification, detection_metrics,
                       diversity_report, overhead_metrics)
from .scenario import OneWayFlow, ScenarioError, load_scenario
from .runner import RunResult, run_scenario
from .topo import GmlParseError, TopologyError, parse_gml

DATASET_ENV = "MIRAGESIM_DATASET"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARTIAL = 2


def _analyze_one(path_str: str) -> tuple[str, DiversityReport | None, str | None]:
    path = Path(path_str)
    try:
        topo = parse_gml(path.read_text(), name=path.name)
        return path.name, diversity_report(topo), None
    except (GmlParseError, TopologyError, UnicodeDecodeError) as exc:
        return path.name, None, str(exc)


def cmd_analyze(args) -> int:
    dataset = args.dataset_dir or os.environ.get(DATASET_ENV)
    if not dataset:
        print(f"analyze: no dataset directory (argument or ${DATASET_ENV})",
              file=sys.stderr)
        return EXIT_USAGE
    dataset = Path(dataset)
    if not dataset.is_dir():
        print(f"analyze: {dataset} is not a directory", file=sys.stderr)
        return EXIT_USAGE
    files = sorted(dataset.glob("*.gml"))
    if not files:
        print(f"analyze: no .gml files in {dataset}", file=sys.stderr)
        return EXIT_USAGE

    out = Path(args.out or "analysis-out")
    out.mkdir(parents=True, exist_ok=True)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_analyze_one, [str(f) for f in files]))
    else:
        results = [_analyze_one(str(f)) for f in files]

    reports = []
    failures = []
    for name, report, error in results:
        if report is None:
            failures.append((name, error))
        else:
            reports.append(report)

    csv_lines = ["topology,percentage"]
    for r in reports:
        csv_lines.append(f"{r.topology},{r.percentage:.2f}")
    (out / "diversity.csv").write_text("\n".join(csv_lines) + "\n")

    summary: dict = {
        "dataset": str(dataset),
        "files": len(files),
        "parsed": len(reports),
        "failed": [name for name, _ in failures],
        "input_hash": _dataset_hash(files),
    }
    if reports:
        ds = dataset_classification(reports)
        summary["zero_redundancy_count"] = ds.zero_redundancy_count
        summary["zero_redundancy_names"] = list(ds.zero_redundancy_names)
        summary["histogram"] = [list(pair) for pair in ds.histogram]
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")

    print(f"analyzed {len(reports)}/{len(files)} topologies -> {out / 'diversity.csv'}")
    if reports:
        print(f"zero-redundancy topologies: {summary['zero_redundancy_count']} "
              f"of {len(reports)}")
    for name, error in failures:
        print(f"unparseable: {name}: {error}", file=sys.stderr)
    return EXIT_PARTIAL if failures else EXIT_OK


def _dataset_hash(files: list[Path]) -> str:
    h = hashlib.sha256()
    for f in files:
        h.update(f.name.encode())
        h.update(f.read_bytes())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------


def write_run_outputs(result: RunResult, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    trace = result.trace
    (out / "trace.jsonl").write_text(trace.to_jsonl())
    (out / "links.csv").write_text(trace.links_csv())
    (out / "rtt.csv").write_text(trace.rtt_csv())

    overhead = overhead_metrics(trace)
    report: dict = {
        "scenario": result.scenario.name,
        "seed": result.scenario.seed,
        "config_hash": result.scenario.config_hash(),
        "counters": dict(sorted(trace.counters.items())),
        "controller_messages": trace.controller_messages,
        "alerts": result.alerts,
        "overhead": {
            "packet_in_total": overhead.packet_in_total,
            "flow_mods": overhead.flow_mods,
            "rules_installed": overhead.rules_installed,
            "rules_expired": overhead.rules_expired,
            "packet_in_by_flow": overhead.packet_in_by_flow,
            "per_packet_phase_ratio": overhead.per_packet_phase_ratio,
        },
    }
    if result.scenario.blackholed_switches:
        truth = {s: (s in result.scenario.blackholed_switches)
                 for s in sorted(result.topo.switches)}
        alerted = {a["switch"] for a in result.alerts}
        metrics = detection_metrics(truth, alerted)
        report["detection"] = {
            "tp": metrics.tp, "fp": metrics.fp, "fn": metrics.fn, "tn": metrics.tn,
            "accuracy": metrics.accuracy, "fpr": metrics.fpr, "fnr": metrics.fnr,
            "notes": list(metrics.notes),
        }
    if result.recon is not None:
        recon_doc = {
            "attacker": result.recon.attacker,
            "reference_peer": result.recon.reference_peer,
            "threshold_us": result.recon.threshold_us,
            "skipped": list(result.recon.skipped),
            "inferred_links": [list(pair) for pair in result.recon.inferred_links],
            "candidates": [
                {
                    "target": c.target,
                    "baseline_delta_us": c.baseline_delta_us,
                    "burst_delta_us": c.burst_delta_us,
                    "classified_shared": c.classified_shared,
                }
                for c in result.recon.candidates
            ],
            "evaluation": {k: v for k, v in result.recon_eval.items()
                           if k in ("tp", "fp", "fn", "tn", "precision",
                                    "recall", "accuracy")},
        }
        (out / "recon.json").write_text(json.dumps(recon_doc, indent=2, sort_keys=True) + "\n")
        report["recon"] = recon_doc["evaluation"]
    if result.flood_plan is not None:
        report["flood"] = {
            "targets": [list(t) for t in result.flood_plan.target_links],
            "uncoverable": [list(t) for t in result.flood_plan.uncoverable],
            "flows": list(result.flood_plan.flows),
        }
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def cmd_simulate(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
        if args.seed is not None:
            scenario = replace(scenario, seed=args.seed)
        result = run_scenario(scenario, base_dir=Path(args.scenario).parent)
    except ScenarioError as exc:
        print(f"simulate: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out or f"run-{scenario.name}")
    report = write_run_outputs(result, out)

    if result.recon is not None:
        ev = result.recon_eval
        print(f"recon precision {ev['precision']:.2f} recall {ev['recall']:.2f} "
              f"({len(result.recon.classified_shared)} of "
              f"{len(result.recon.candidates)} candidates classified shared)")
    elif "detection" in report:
        d = report["detection"]
        print(f"detection accuracy {d['accuracy']:.2%} "
              f"(tp={d['tp']} fp={d['fp']} fn={d['fn']} tn={d['tn']})")
    else:
        c = report["counters"]
        print(f"run complete: {c['packets_created']} packets, "
              f"{report['controller_messages']} controller messages")
    print(f"outputs in {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------

SWEEP_PARAMS = ("load", "lambda", "probeInterval", "burst_rate")


def _apply_sweep_value(scenario, param: str, value: float):
    if param == "load":
        workload = tuple(
            replace(w, rate_pkt_per_ms=w.rate_pkt_per_ms * value)
            if isinstance(w, OneWayFlow) else w
            for w in scenario.workload
        )
        return replace(scenario, workload=workload)
    if param == "lambda":
        return replace(scenario, defense=replace(
            scenario.defense, lambda_threshold=int(value)))
    if param == "probeInterval":
        probe = replace(scenario.defense.probe, probe_interval_ms=value)
        return replace(scenario, defense=replace(scenario.defense, probe=probe))
    if param == "burst_rate":
        return replace(scenario, recon=replace(
            scenario.recon, burst_rate_pkt_per_ms=value))
    raise ValueError(f"unknown sweep parameter {param!r}")


def _sweep_one(packed) -> dict:
    scenario_path, param, value, index, base_seed = packed
    scenario = load_scenario(scenario_path)
    scenario = replace(scenario, seed=base_seed + index)
    scenario = _apply_sweep_value(scenario, param, value)
    result = run_scenario(scenario, base_dir=Path(scenario_path).parent)
    trace = result.trace
    c = trace.counters
    row = {
        "value": value,
        "seed": scenario.seed,
        "controller_messages": trace.controller_messages,
        "packet_in": c["packet_in"],
        "rules_installed": c["rules_installed"],
        "packets_dropped": c["packets_dropped"],
        "probe_sent": c["probe_sent"],
        "probe_loss_rate": _probe_loss_rate(c),
        "alerts": len({a["switch"] for a in result.alerts}),
    }
    if result.scenario.blackholed_switches:
        truth = {s: (s in result.scenario.blackholed_switches)
                 for s in sorted(result.topo.switches)}
        metrics = detection_metrics(truth, {a["switch"] for a in result.alerts})
        row["detection_accuracy"] = round(metrics.accuracy, 6)
    if result.recon_eval is not None:
        row["recon_precision"] = round(result.recon_eval["precision"], 6)
        row["recon_recall"] = round(result.recon_eval["recall"], 6)
    return row


def _probe_loss_rate(counters: dict) -> float:
    sent = counters.get("probe_sent", 0)
    if not sent:
        return 0.0
    answered = counters.get("probe_reply_delivered", 0)
    return round(1.0 - answered / sent, 6)


def cmd_sweep(args) -> int:
    if args.param not in SWEEP_PARAMS:
        print(f"sweep: unknown parameter {args.param!r} "
              f"(choose from {', '.join(SWEEP_PARAMS)})", file=sys.stderr)
        return EXIT_USAGE
    try:
        values = [float(v) for v in args.values]
    except ValueError:
        print("sweep: values must be numeric", file=sys.stderr)
        return EXIT_USAGE
    try:
        base = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"sweep: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_USAGE
    base_seed = args.seed if args.seed is not None else base.seed

    jobs = [(args.scenario, args.param, v, i, base_seed)
            for i, v in enumerate(values)]
    try:
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                rows = list(pool.map(_sweep_one, jobs))
        else:
            rows = [_sweep_one(j) for j in jobs]
    except ScenarioError as exc:
        print(f"sweep: {exc}", file=sys.stderr)
        return EXIT_USAGE

    columns = sorted({k for row in rows for k in row}, key=_column_order)
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_csv_cell(row.get(col)) for col in columns))
    out = Path(args.out or f"sweep-{args.param}.csv")
    if out.is_dir():
        out = out / f"sweep-{args.param}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n")
    print(f"sweep of {args.param} over {len(values)} values -> {out}")
    return EXIT_OK


def _column_order(col: str):
    fixed = {"value": 0, "seed": 1}
    return (fixed.get(col, 2), col)


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, "g")
    return str(value)


# ---------------------------------------------------------------------------


def cmd_report(args) -> int:
    if args.counts:
        return _report_counts(args)
    if not args.run_dir:
        print("report: give a run directory or --counts", file=sys.stderr)
        return EXIT_USAGE
    path = Path(args.run_dir) / "report.json"
    if not path.exists():
        print(f"report: {path} not found", file=sys.stderr)
        return EXIT_USAGE
    report = json.loads(path.read_text())
    print(f"scenario {report['scenario']} seed {report['seed']} "
          f"config {report['config_hash']}")
    c = report["counters"]
    print(f"packets: {c['packets_created']} created, {c['packets_delivered']} "
          f"delivered, {c['packets_dropped']} dropped")
    print(f"controller messages: {report['controller_messages']} "
          f"(packet-in {c['packet_in']}, flow-mod {c['flow_mod']})")
    if "detection" in report:
        d = report["detection"]
        print(f"detection: accuracy {d['accuracy']:.2%} fpr {d['fpr']:.2%} "
              f"fnr {d['fnr']:.2%} (tp={d['tp']} fp={d['fp']} fn={d['fn']} "
              f"tn={d['tn']})")
        for note in d.get("notes", []):
            print(f"  note: {note}")
    if "recon" in report:
        r = report["recon"]
        print(f"recon: precision {r['precision']:.2f} recall {r['recall']:.2f}")
    for alert in report.get("alerts", []):
        print(f"alert: switch {alert['switch']} at "
              f"{alert['declared_at_us'] / 1000:.1f} ms "
              f"after {alert['probes_sent']} probes")
    return EXIT_OK


def _report_counts(args) -> int:
    try:
        parts = dict(kv.split("=") for kv in args.counts.split(","))
        tp, fp = int(parts["tp"]), int(parts["fp"])
        fn, tn = int(parts["fn"]), int(parts["tn"])
    except (KeyError, ValueError):
        print("report: --counts wants tp=..,fp=..,fn=..,tn=..", file=sys.stderr)
        return EXIT_USAGE
    claimed = None
    if args.claimed:
        try:
            claimed = {k: float(v) for k, v in
                       (kv.split("=") for kv in args.claimed.split(","))}
        except ValueError:
            print("report: --claimed wants metric=ratio[,metric=ratio...]",
                  file=sys.stderr)
            return EXIT_USAGE
    truth = {f"pos{i}": True for i in range(tp + fn)}
    truth.update({f"neg{i}": False for i in range(fp + tn)})
    alerted = {f"pos{i}" for i in range(tp)} | {f"neg{i}" for i in range(fp)}
    metrics = detection_metrics(truth, alerted, claimed=claimed)
    print(f"computed: accuracy {metrics.accuracy:.2%} fpr {metrics.fpr:.2%} "
          f"fnr {metrics.fnr:.2%} (tp={tp} fp={fp} fn={fn} tn={tn})")
    for note in metrics.notes:
        print(f"note: {note}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="miragesim",
                                     description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("analyze", help="path-diversity report over GML files")
    p.add_argument("dataset_dir", nargs="?",
                   help=f"directory of .gml files (default ${DATASET_ENV})")
    p.add_argument("--out", help="output directory (default analysis-out)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="run one scenario file")
    p.add_argument("scenario")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run a scenario across parameter values")
    p.add_argument("scenario")
    p.add_argument("param", help=f"one of {', '.join(SWEEP_PARAMS)}")
    p.add_argument("values", nargs="+")
    p.add_argument("--out", help="output CSV path")
    p.add_argument("--seed", type=int, help="base seed (offset per value)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="render a run directory or check counts")
    p.add_argument("run_dir", nargs="?")
    p.add_argument("--counts", help="tp=..,fp=..,fn=..,tn=..")
    p.add_argument("--claimed", help="externally claimed ratios to verify, "
                                     "e.g. accuracy=0.88,fpr=0.04,fnr=0.12")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_help()
        return EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
