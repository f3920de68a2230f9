"""Command-line front end: gen-trace, transform, run, report."""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import metrics
from .engine import Simulation
from .reliability import apply_scheme, link_layer_stats, parse_scheme, write_linktrace
from .scenario import Scenario, ScenarioError, load_scenario, parse_seeds, to_ns
from .trace import (GilbertElliottParams, TraceError, erasure_bursts, generate_trace,
                    load_trace, write_trace)

OUTPUT_ENV = "XLAYER_OUTPUT_DIR"
DEFAULT_OUTPUT = "xlayer-out"

PACKET_LOG = "packet_log.tsv"
TRANSPORT_LOG = "transport_log.tsv"
LINK_STATS = "link_stats.json"
CONFIG = "config.json"
REPORT = "report.json"
CWND_CSV = "cwnd.csv"
DELAY_CSV = "delay.csv"


class UsageError(Exception):
    pass


def _err(msg):
    print(f"xlayer: {msg}", file=sys.stderr)


def _write(path, data):
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(path, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": "\n"})) as fh:
        fh.write(data)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# gen-trace
# ---------------------------------------------------------------------------


def cmd_gen_trace(args) -> int:
    try:
        decode = to_ns(args.decode_latency_ms, 1_000_000, "--decode-latency-ms")
        params = GilbertElliottParams(args.p_gb, args.p_bg, args.e_good, args.e_bad,
                                      decode, args.seed)
        trace = generate_trace(params, args.slots, args.capacity, args.lldu_size)
    except (ValueError, TraceError) as exc:
        raise UsageError(str(exc)) from None
    _write(args.output, write_trace(trace))
    erased = int(trace.erased.sum())
    print(f"wrote {args.output}: {len(trace)} slots, {erased} erased "
          f"({erased / len(trace):.4%}), slot {trace.slot_duration} ns")
    bursts = erasure_bursts(trace)
    if bursts:
        print("burst lengths: " + " ".join(f"{k}:{v}" for k, v in sorted(bursts.items())))
    return 0


# ---------------------------------------------------------------------------
# transform
# ---------------------------------------------------------------------------


def cmd_transform(args) -> int:
    if not os.path.exists(args.trace):
        raise UsageError(f"trace file not found: {args.trace}")
    try:
        scheme = parse_scheme(
            args.scheme, to_ns(args.feedback_ms, 1_000_000, "--feedback-ms"),
            None if args.detection_ms is None
            else to_ns(args.detection_ms, 1_000_000, "--detection-ms"))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    trace = load_trace(args.trace)
    lt = apply_scheme(trace, scheme)
    _write(args.output, write_linktrace(lt))
    stats = link_layer_stats(lt)
    print(f"wrote {args.output}: scheme {scheme.label()}, {stats.data_units} data units, "
          f"{stats.delivered_units} delivered, {stats.dropped_units} dropped")
    print(f"MCR {stats.data_units / stats.units_sent:.6f} "
          f"(data units / units sent, {stats.units_sent} sent)")
    return 0


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def run_one(scenario: Scenario, seed: int, out_dir: str) -> metrics.MetricsReport:
    """Simulate one seed and persist every artifact under ``out_dir``."""
    cfg = scenario.sim_config(seed)
    result = Simulation(cfg).run()
    link = link_layer_stats(cfg.link)
    link_stats = {"flow": result.flow_stats, "link": link.to_dict()}
    info = scenario.describe(seed)
    packet_text = metrics.format_packet_log(result.packets)
    transport_text = metrics.format_transport_log(result.transport)
    packets = metrics.parse_packet_log(packet_text)
    transport = metrics.parse_transport_log(transport_text)
    report = metrics.compute_report(packets, transport, link_stats, info)
    cwnd, delay = metrics.emit_timeseries(packets, transport)
    os.makedirs(out_dir, exist_ok=True)
    _write(os.path.join(out_dir, PACKET_LOG), packet_text)
    _write(os.path.join(out_dir, TRANSPORT_LOG), transport_text)
    _write(os.path.join(out_dir, LINK_STATS), _dump_json(link_stats))
    _write(os.path.join(out_dir, CONFIG), _dump_json(info))
    _write(os.path.join(out_dir, REPORT), report.to_json())
    _write(os.path.join(out_dir, CWND_CSV), cwnd)
    _write(os.path.join(out_dir, DELAY_CSV), delay)
    return report


def _safe(label):
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in label) or "run"


def cmd_run(args) -> int:
    scenarios = []
    for path in args.scenario:
        try:
            sc = load_scenario(path)
            if args.seeds is not None:
                sc = Scenario(**{**sc.__dict__, "seeds": tuple(parse_seeds(args.seeds))})
            if args.duration_s is not None:
                sc = Scenario(**{**sc.__dict__,
                                 "duration": to_ns(args.duration_s, 1_000_000_000, "--duration-s")})
        except ScenarioError as exc:
            raise UsageError(str(exc)) from None
        if sc.trace_path is not None and not os.path.exists(sc.trace_path):
            raise UsageError(f"trace file not found: {sc.trace_path}")
        scenarios.append(sc)
    labels = [s.label for s in scenarios]
    if len(set(labels)) != len(labels):
        raise UsageError(f"duplicate scenario labels: {labels}")
    root = args.out or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT
    jobs = [(sc, seed, os.path.join(root, _safe(sc.label), f"seed-{seed}"))
            for sc in scenarios for seed in sc.seeds]
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        reports = list(pool.map(lambda j: run_one(*j), jobs))
    for (sc, seed, out), rep in zip(jobs, reports):
        problems = metrics.conservation_errors(rep)
        if problems:
            for p in problems:
                _err(f"{sc.label} seed {seed}: {p}")
            return 1
        print(f"{out}: goodput {rep.goodput_kbps:.1f} kbps, MCR {rep.mcr:.4f}, "
              f"bandwidth {rep.bandwidth_used_pct:.4f}, rto {rep.rto_events}",
              file=sys.stderr)
    if not args.quiet:
        sys.stdout.write(metrics.format_table(
            [_relabel(r, seed, len(sc.seeds)) for (sc, seed, _), r in zip(jobs, reports)]))
    return 0


def _relabel(report, seed, n_seeds):
    if n_seeds == 1:
        return report
    d = report.to_dict()
    d["label"] = f"{report.label}#{seed}"
    return metrics.MetricsReport.from_dict(d)


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def find_run_dirs(root: str) -> list[str]:
    found = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        if PACKET_LOG in filenames:
            found.append(dirpath)
    return found


def load_report(run_dir: str) -> metrics.MetricsReport:
    def read(name):
        with open(os.path.join(run_dir, name), encoding="utf-8") as fh:
            return fh.read()
    packets = metrics.parse_packet_log(read(PACKET_LOG))
    transport = metrics.parse_transport_log(read(TRANSPORT_LOG))
    link_stats = json.loads(read(LINK_STATS))
    info = json.loads(read(CONFIG))
    return metrics.compute_report(packets, transport, link_stats, info)


def cmd_report(args) -> int:
    if not os.path.isdir(args.directory):
        raise UsageError(f"not a directory: {args.directory}")
    dirs = find_run_dirs(args.directory)
    if not dirs:
        raise UsageError(f"no run logs ({PACKET_LOG}) under {args.directory}")
    try:
        reports = [load_report(d) for d in dirs]
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read logs: {exc}") from None
    if args.format == "json":
        if len(reports) == 1:
            sys.stdout.write(reports[0].to_json())
        else:
            sys.stdout.write(_dump_json({os.path.relpath(d, args.directory): r.to_dict()
                                         for d, r in zip(dirs, reports)}))
    else:
        if len(reports) > 1:
            reports = [metrics.MetricsReport.from_dict(
                {**r.to_dict(), "label": os.path.relpath(d, args.directory)})
                for d, r in zip(dirs, reports)]
        sys.stdout.write(metrics.format_table(reports))
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _prob(text):
    try:
        p = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= p <= 1.0:
        raise argparse.ArgumentTypeError(f"probability must lie in [0, 1], got {p}")
    return p


def _positive(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="xlayer",
        description="Trace-driven simulation of link-layer reliability under a TCP flow.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-trace", help="generate a Gilbert-Elliott physical trace")
    g.add_argument("--slots", type=_positive, required=True, help="number of slots")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--p-gb", type=_prob, default=1e-4, help="good->bad transition probability")
    g.add_argument("--p-bg", type=_prob, default=0.02, help="bad->good transition probability")
    g.add_argument("--e-good", type=_prob, default=0.003, help="erasure probability in good state")
    g.add_argument("--e-bad", type=_prob, default=0.3, help="erasure probability in bad state")
    g.add_argument("--decode-latency-ms", default="35.5")
    g.add_argument("--capacity", type=_positive, default=2_300_000, help="bits per second")
    g.add_argument("--lldu-size", type=_positive, default=33, help="bytes per slot")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen_trace)

    t = sub.add_parser("transform", help="apply a reliability scheme to a trace")
    t.add_argument("trace")
    t.add_argument("--scheme", required=True,
                   help="none | fec:ND,TOTAL | sr-arq[:MAXRETX] | harq2:ND,TOTAL[,PER_ROUND[,ROUNDS]]")
    t.add_argument("--feedback-ms", default="0", help="one-way NACK delay")
    t.add_argument("--detection-ms", default=None,
                   help="erasure detection delay (default: the trace's modal decode latency)")
    t.add_argument("-o", "--output", required=True)
    t.set_defaults(func=cmd_transform)

    r = sub.add_parser("run", help="run one or more scenario files")
    r.add_argument("scenario", nargs="+")
    r.add_argument("--seeds", help="override seeds: N, A..B or A,B,C")
    r.add_argument("--duration-s", help="override run duration")
    r.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or {DEFAULT_OUTPUT})")
    r.add_argument("--jobs", type=_positive, default=os.cpu_count() or 1)
    r.add_argument("--quiet", action="store_true", help="skip the summary table")
    r.set_defaults(func=cmd_run)

    q = sub.add_parser("report", help="recompute reports from run logs")
    q.add_argument("directory")
    q.add_argument("--format", choices=("table", "json"), default="table")
    q.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        _err(str(exc))
        return 2
    except (TraceError, ScenarioError) as exc:
        _err(str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
