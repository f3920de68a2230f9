"""Post-run metrics computed from the persisted logs of one simulation.

Everything here works on the text logs (packet log, transport log) plus the
two JSON side files, so a report recomputed from disk is bit-identical to the
one produced at run time.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field

from .link_queue import (DELIVERED, DROPPED, EXHAUSTED, IN_FLIGHT, PACKET_LOG_HEADER,
                         QUEUE_DROP, IpPacketRecord)
from .engine import TRANSPORT_LOG_HEADER, SimResult, TransportEvent

FATES = (DELIVERED, DROPPED, QUEUE_DROP, EXHAUSTED, IN_FLIGHT)


class LogError(ValueError):
    """A log file that does not parse."""


# ---------------------------------------------------------------------------
# log text round trip
# ---------------------------------------------------------------------------


def format_packet_log(packets) -> str:
    return "\n".join([PACKET_LOG_HEADER] + [p.row() for p in packets]) + "\n"


def format_transport_log(events) -> str:
    return "\n".join([TRANSPORT_LOG_HEADER] + [e.row() for e in events]) + "\n"


def _body(text, header, name):
    lines = text.splitlines()
    if not lines or lines[0] != header:
        raise LogError(f"{name}: missing header line {header!r}")
    return enumerate(lines[1:], start=2)


def parse_packet_log(text: str) -> list[IpPacketRecord]:
    out = []
    for ln, line in _body(text, PACKET_LOG_HEADER, "packet log"):
        parts = line.split(" ")
        if len(parts) != 9 or parts[6] not in FATES:
            raise LogError(f"packet log line {ln}: bad row {line!r}")
        try:
            pid, te, n, m, td, eff = (int(x) for x in parts[:6])
            fate_at = int(parts[7])
        except ValueError:
            raise LogError(f"packet log line {ln}: non-integer field") from None
        out.append(IpPacketRecord(pid, 0, te, n, m, 0, td, eff, parts[6], fate_at))
    return out


def parse_transport_log(text: str) -> list[TransportEvent]:
    out = []
    for ln, line in _body(text, TRANSPORT_LOG_HEADER, "transport log"):
        parts = line.split(" ")
        if len(parts) != 4:
            raise LogError(f"transport log line {ln}: bad row {line!r}")
        try:
            value = float(parts[3]) if "." in parts[3] else int(parts[3])
            out.append(TransportEvent(int(parts[0]), parts[1], int(parts[2]), value))
        except ValueError:
            raise LogError(f"transport log line {ln}: bad number") from None
    return out


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Triple:
    min: float = 0.0
    mean: float = 0.0
    max: float = 0.0

    @classmethod
    def of(cls, values):
        if not values:
            return cls()
        return cls(min(values), math.fsum(values) / len(values), max(values))


@dataclass(frozen=True)
class MetricsReport:
    label: str
    duration_ns: int
    bandwidth_used_pct: float
    goodput_kbps: float
    mcr: float
    delay_ns: Triple
    queuing_delay_ns: Triple
    link_retx_dist: dict
    transport_retx_dist: dict
    rto_events: int
    erasure_dist: dict
    packets: dict
    lldus: dict
    segments_acked: int
    empty_run: bool = False
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["delay_ns"] = asdict(self.delay_ns)
        d["queuing_delay_ns"] = asdict(self.queuing_delay_ns)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        d = dict(d)
        d["delay_ns"] = Triple(**d["delay_ns"])
        d["queuing_delay_ns"] = Triple(**d["queuing_delay_ns"])
        return cls(**d)


def _fractions(counter: dict) -> dict:
    total = sum(counter.values())
    if total == 0:
        return {}
    return {str(k): counter[k] / total for k in sorted(counter)}


def compute_report(packets: list[IpPacketRecord], transport: list[TransportEvent],
                   link_stats: dict, run_info: dict) -> MetricsReport:
    """Metric suite for one run.

    ``link_stats`` holds ``flow`` (the engine's flow_stats) and ``link``
    (link-layer stats of the whole trace). ``run_info`` needs
    ``duration_ns``, ``slot_duration_ns``, ``segment_size`` and ``label``.
    """
    duration = int(run_info["duration_ns"])
    slot = int(run_info["slot_duration_ns"])
    seg = int(run_info["segment_size"])
    flow = link_stats.get("flow", {})
    link = link_stats.get("link", {})

    fates = {f: 0 for f in FATES}
    for p in packets:
        fates[p.fate] += 1
    fates["total"] = len(packets)

    pid_seq = {}
    first_send = {}
    tx = {}
    acked = 0
    rto = 0
    for e in transport:
        if e.event in ("send", "retx"):
            pid_seq[e.value] = e.seq
            first_send.setdefault(e.seq, e.time)
            tx[e.seq] = tx.get(e.seq, 0) + 1
        elif e.event == "ack":
            acked = max(acked, e.seq)
        elif e.event == "rto":
            rto += 1

    first_delivery = {}
    for p in packets:
        if p.fate == DELIVERED:
            seq = pid_seq.get(p.id)
            if seq is None:
                raise LogError(f"packet {p.id} has no send event")
            if seq not in first_delivery or p.fate_at < first_delivery[seq]:
                first_delivery[seq] = p.fate_at
    delays = [first_delivery[s] - first_send[s] for s in sorted(first_delivery)]
    queuing = [p.queuing_delay for p in packets if p.eff_departure >= 0]

    retx_hist = {}
    for count in tx.values():
        retx_hist[count - 1] = retx_hist.get(count - 1, 0) + 1

    sent_units = float(flow.get("sent_units", 0.0))
    useful = int(flow.get("useful_units", 0))
    claimed = int(flow.get("claimed_lldus", 0))
    bursts = {int(k): v for k, v in link.get("erasure_bursts", {}).items()}
    empty = not packets or not delays

    return MetricsReport(
        label=str(run_info.get("label", "")),
        duration_ns=duration,
        bandwidth_used_pct=min(sent_units * slot / duration, 1.0),
        goodput_kbps=acked * seg * 8 / (duration / 1e9) / 1000,
        mcr=useful / sent_units if sent_units > 0 else 0.0,
        delay_ns=Triple.of(delays),
        queuing_delay_ns=Triple.of(queuing),
        link_retx_dist=dict(flow.get("retx_dist", {})),
        transport_retx_dist=_fractions(retx_hist),
        rto_events=rto,
        erasure_dist=_fractions(bursts),
        packets=fates,
        lldus={"claimed": claimed,
               "delivered": int(flow.get("delivered_lldus", 0)),
               "dropped": int(flow.get("dropped_lldus", 0))},
        segments_acked=acked,
        empty_run=empty,
    )


def report_from_result(result: SimResult, link_stats: dict, run_info: dict) -> MetricsReport:
    """Same as ``compute_report`` but goes through the log text first."""
    packets = parse_packet_log(format_packet_log(result.packets))
    transport = parse_transport_log(format_transport_log(result.transport))
    return compute_report(packets, transport, link_stats, run_info)


def conservation_errors(report: MetricsReport) -> list[str]:
    """Violated balance equations, empty when the run is consistent."""
    errors = []
    p = report.packets
    if sum(p[f] for f in FATES) != p["total"]:
        errors.append(f"packet fates {p} do not sum to the total")
    lld = report.lldus
    if lld["delivered"] + lld["dropped"] != lld["claimed"]:
        errors.append(f"lldu outcomes {lld} do not sum to the claimed count")
    for name in ("link_retx_dist", "transport_retx_dist", "erasure_dist"):
        dist = getattr(report, name)
        if dist and abs(math.fsum(dist.values()) - 1.0) > 1e-9:
            errors.append(f"{name} sums to {math.fsum(dist.values())}")
    for name in ("delay_ns", "queuing_delay_ns"):
        t = getattr(report, name)
        if not t.min <= t.mean <= t.max:
            errors.append(f"{name} not ordered: {t}")
    if not 0.0 <= report.mcr <= 1.0:
        errors.append(f"mcr {report.mcr} outside [0, 1]")
    if not 0.0 <= report.bandwidth_used_pct <= 1.0:
        errors.append(f"bandwidth {report.bandwidth_used_pct} outside [0, 1]")
    return errors


# ---------------------------------------------------------------------------
# output formats
# ---------------------------------------------------------------------------


def _pct(x):
    return f"{100 * x:.4g}%"


def format_table(reports: list[MetricsReport]) -> str:
    """Side-by-side text table, one column per report."""
    if not reports:
        return ""
    rows = [("Metric", [r.label or f"run{i}" for i, r in enumerate(reports)])]
    rows.append(("% of the bandwidth used", [_pct(r.bandwidth_used_pct) for r in reports]))
    rows.append(("Goodput (kbps)", [f"{r.goodput_kbps:.1f}" for r in reports]))
    rows.append(("MCR (useful/sent)", [_pct(r.mcr) for r in reports]))
    for key in ("min", "mean", "max"):
        rows.append((f"delay {key} (ms)",
                     [f"{getattr(r.delay_ns, key) / 1e6:.1f}" for r in reports]))
    rows.append(("RTO events", [str(r.rto_events) for r in reports]))
    for layer, attr in (("link", "link_retx_dist"), ("transport", "transport_retx_dist")):
        keys = sorted({int(k) for r in reports for k in getattr(r, attr)})
        for k in keys:
            rows.append((f"retx {k} ({layer})",
                         [_pct(getattr(r, attr).get(str(k), 0.0)) for r in reports]))
    rows.append(("queuing delay mean (ms)",
                 [f"{r.queuing_delay_ns.mean / 1e6:.1f}" for r in reports]))
    width0 = max(len(name) for name, _ in rows)
    widths = [max(len(cells[i]) for _, cells in rows) for i in range(len(reports))]
    out = []
    for name, cells in rows:
        out.append("  ".join([name.ljust(width0)] + [c.rjust(w) for c, w in zip(cells, widths)]))
    return "\n".join(out) + "\n"


def cwnd_csv(transport: list[TransportEvent]) -> str:
    buf = io.StringIO()
    buf.write("time_ns,cwnd_segments\n")
    for e in transport:
        if e.event == "cwnd":
            buf.write(f"{e.time},{float(e.value):.6f}\n")
    return buf.getvalue()


def delay_csv(packets: list[IpPacketRecord], transport: list[TransportEvent]) -> str:
    """Delivered packets in delivery order: one row per delivery."""
    pid_seq = {}
    first_send = {}
    for e in transport:
        if e.event in ("send", "retx"):
            pid_seq[e.value] = e.seq
            first_send.setdefault(e.seq, e.time)
    rows = sorted((p.fate_at, p.id) for p in packets if p.fate == DELIVERED)
    buf = io.StringIO()
    buf.write("delivery_ns,packet_id,seq,delay_ns\n")
    for at, pid in rows:
        seq = pid_seq[pid]
        buf.write(f"{at},{pid},{seq},{at - first_send[seq]}\n")
    return buf.getvalue()


def emit_timeseries(packets, transport) -> tuple[str, str]:
    """(cwnd CSV, per-packet delay CSV) ready for plotting."""
    return cwnd_csv(transport), delay_csv(packets, transport)
