"""Scenario files: one INI document per simulated link.

Example::

    [trace]
    generator = gilbert-elliott
    p_good_to_bad = 0.0001
    p_bad_to_good = 0.02
    erasure_prob_good = 0.003
    erasure_prob_bad = 0.3
    decode_latency_ms = 35.5
    capacity_bps = 2300000
    lldu_size_bytes = 33

    [link]
    scheme = sr-arq:3
    propagation_ms = 285
    queue_capacity = 100

    [transport]
    cwnd_cap = 64

    [run]
    label = ARQ
    duration_s = 400
    seeds = 1..10

Instead of generator parameters, ``[trace] path = file.trace`` loads a
recorded trace (relative paths resolve against the scenario file). Every run
is a pure function of the scenario and the seed.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import asdict, dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Optional

from .engine import SimConfig
from .link_queue import QueueConfig
from .reliability import ReliabilityScheme, apply_scheme, parse_scheme
from .trace import (DEFAULT_DECODE_LATENCY, GilbertElliottParams, PhyTrace,
                    generate_trace, load_trace, slot_duration_ns)
from .transport import TransportConfig

NS = 1_000_000_000
SECTIONS = ("trace", "link", "transport", "run")

_TRACE_KEYS = {"path", "generator", "p_good_to_bad", "p_bad_to_good", "erasure_prob_good",
               "erasure_prob_bad", "decode_latency_ms", "capacity_bps", "lldu_size_bytes",
               "slots", "seed"}
_LINK_KEYS = {"scheme", "propagation_ms", "feedback_delay_ms", "detection_latency_ms",
              "queue_capacity"}
_TRANSPORT_KEYS = {"segment_size", "cwnd_cap", "initial_cwnd", "initial_ssthresh",
                   "dupack_threshold", "rto_min_s", "rto_initial_s", "rto_max_s",
                   "ack_path_delay_ms", "total_segments"}
_RUN_KEYS = {"label", "duration_s", "seeds", "output_dir"}


class ScenarioError(ValueError):
    """Unusable scenario file."""


def to_ns(value: str, unit: int, key: str) -> int:
    """Decimal string in ``unit`` ns steps, converted exactly."""
    try:
        ns = Decimal(value.strip()) * unit
    except InvalidOperation:
        raise ScenarioError(f"{key}: not a number: {value!r}") from None
    if ns != ns.to_integral_value():
        raise ScenarioError(f"{key}: {value} is not a whole number of nanoseconds")
    return int(ns)


def parse_seeds(text: str) -> list[int]:
    """``"3"``, ``"1..10"`` (inclusive) or ``"1,4,9"``."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = (int(x) for x in text.split("..", 1))
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise ScenarioError(f"bad seed list {text!r}; use N, A..B or A,B,C") from None


@dataclass(frozen=True)
class Scenario:
    label: str
    scheme: str
    propagation: int
    queue_capacity: int
    duration: int
    seeds: tuple[int, ...]
    capacity: int = 2_300_000
    lldu_size: int = 33
    trace_path: Optional[str] = None
    channel: Optional[GilbertElliottParams] = None
    slots: Optional[int] = None
    feedback_delay: Optional[int] = None
    detection_latency: Optional[int] = None
    transport: TransportConfig = field(default_factory=TransportConfig)
    output_dir: Optional[str] = None

    @property
    def slot_duration(self) -> int:
        return slot_duration_ns(self.lldu_size, self.capacity)

    def reliability(self) -> ReliabilityScheme:
        fb = self.propagation if self.feedback_delay is None else self.feedback_delay
        return parse_scheme(self.scheme, fb, self.detection_latency)

    def n_slots(self) -> int:
        if self.slots is not None:
            return self.slots
        # headroom for slots used by retransmissions and repair units
        return self.duration // self.slot_duration * 11 // 10 + 1000

    def build_trace(self, seed: int) -> PhyTrace:
        if self.trace_path is not None:
            if not os.path.exists(self.trace_path):
                raise ScenarioError(f"trace file not found: {self.trace_path}")
            return load_trace(self.trace_path)
        params = GilbertElliottParams(**{**asdict(self.channel), "seed": seed})
        return generate_trace(params, self.n_slots(), self.capacity, self.lldu_size)

    def sim_config(self, seed: int) -> SimConfig:
        link = apply_scheme(self.build_trace(seed), self.reliability())
        return SimConfig(link, QueueConfig(self.queue_capacity, self.propagation),
                         self.transport, self.duration)

    def describe(self, seed: int) -> dict:
        """JSON-ready record of everything the run depends on."""
        t = self.transport
        return {
            "label": self.label,
            "seed": seed,
            "scheme": self.reliability().label(),
            "duration_ns": self.duration,
            "slot_duration_ns": self.slot_duration,
            "segment_size": t.segment_size,
            "capacity_bps": self.capacity,
            "lldu_size_bytes": self.lldu_size,
            "propagation_ns": self.propagation,
            "feedback_delay_ns": self.reliability().feedback_delay,
            "detection_latency_ns": self.detection_latency,
            "queue_capacity": self.queue_capacity,
            "trace": ({"path": self.trace_path} if self.trace_path is not None else
                      {"generator": "gilbert-elliott", "slots": self.n_slots(),
                       **{k: v for k, v in asdict(self.channel).items() if k != "seed"}}),
            "transport": asdict(t),
        }


def _check_keys(cp, section, allowed):
    if not cp.has_section(section):
        return {}
    items = dict(cp.items(section))
    unknown = sorted(set(items) - allowed)
    if unknown:
        raise ScenarioError(f"[{section}] unknown keys: {', '.join(unknown)}")
    return items


def _int(items, key, default=None):
    if key not in items:
        return default
    try:
        return int(items[key])
    except ValueError:
        raise ScenarioError(f"{key}: not an integer: {items[key]!r}") from None


def _float(items, key, default):
    if key not in items:
        return default
    try:
        return float(items[key])
    except ValueError:
        raise ScenarioError(f"{key}: not a number: {items[key]!r}") from None


def _opt_ns(items, key, unit):
    return to_ns(items[key], unit, key) if key in items else None


def parse_scenario(text: str, base_dir: str = ".", name: str = "scenario") -> Scenario:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=name)
    except configparser.Error as exc:
        raise ScenarioError(str(exc)) from None
    extra = sorted(set(cp.sections()) - set(SECTIONS))
    if extra:
        raise ScenarioError(f"unknown sections: {', '.join(extra)}")
    tr = _check_keys(cp, "trace", _TRACE_KEYS)
    ln = _check_keys(cp, "link", _LINK_KEYS)
    tp = _check_keys(cp, "transport", _TRANSPORT_KEYS)
    rn = _check_keys(cp, "run", _RUN_KEYS)

    if "scheme" not in ln:
        raise ScenarioError("[link] scheme is required")
    path = tr.get("path")
    channel = None
    if path is not None:
        path = os.path.normpath(os.path.join(base_dir, path))
    else:
        gen = tr.get("generator", "gilbert-elliott")
        if gen != "gilbert-elliott":
            raise ScenarioError(f"unknown generator {gen!r}")
        decode = _opt_ns(tr, "decode_latency_ms", 1_000_000)
        try:
            channel = GilbertElliottParams(
                _float(tr, "p_good_to_bad", 0.0), _float(tr, "p_bad_to_good", 1.0),
                _float(tr, "erasure_prob_good", 0.0), _float(tr, "erasure_prob_bad", 1.0),
                DEFAULT_DECODE_LATENCY if decode is None else decode,
                _int(tr, "seed", 0))
        except ValueError as exc:
            raise ScenarioError(f"[trace] {exc}") from None

    defaults = TransportConfig()
    try:
        transport = TransportConfig(
            segment_size=_int(tp, "segment_size", defaults.segment_size),
            cwnd_cap=_int(tp, "cwnd_cap", defaults.cwnd_cap),
            initial_cwnd=_int(tp, "initial_cwnd", defaults.initial_cwnd),
            initial_ssthresh=_int(tp, "initial_ssthresh"),
            dupack_threshold=_int(tp, "dupack_threshold", defaults.dupack_threshold),
            rto_min=_opt_ns(tp, "rto_min_s", NS) or defaults.rto_min,
            rto_initial=_opt_ns(tp, "rto_initial_s", NS) or defaults.rto_initial,
            rto_max=_opt_ns(tp, "rto_max_s", NS) or defaults.rto_max,
            ack_path_delay=_opt_ns(tp, "ack_path_delay_ms", 1_000_000),
            total_segments=_int(tp, "total_segments"),
        )
        scenario = Scenario(
            label=rn.get("label", os.path.splitext(os.path.basename(name))[0]),
            scheme=ln["scheme"],
            propagation=_opt_ns(ln, "propagation_ms", 1_000_000) or 0,
            queue_capacity=_int(ln, "queue_capacity", QueueConfig().capacity_packets),
            duration=to_ns(rn.get("duration_s", "400"), NS, "duration_s"),
            seeds=tuple(parse_seeds(rn.get("seeds", str(_int(tr, "seed", 0))))),
            capacity=_int(tr, "capacity_bps", 2_300_000),
            lldu_size=_int(tr, "lldu_size_bytes", 33),
            trace_path=path,
            channel=channel,
            slots=_int(tr, "slots"),
            feedback_delay=_opt_ns(ln, "feedback_delay_ms", 1_000_000),
            detection_latency=_opt_ns(ln, "detection_latency_ms", 1_000_000),
            transport=transport,
            output_dir=rn.get("output_dir"),
        )
        QueueConfig(scenario.queue_capacity, scenario.propagation)
        scenario.reliability()
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc)) from None
    if scenario.duration <= 0:
        raise ScenarioError("duration_s must be positive")
    if scenario.capacity <= 0 or scenario.lldu_size <= 0:
        raise ScenarioError("capacity_bps and lldu_size_bytes must be positive")
    if scenario.slots is not None and scenario.slots < 1:
        raise ScenarioError("slots must be >= 1")
    return scenario


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {path}") from None
    return parse_scenario(text, os.path.dirname(os.path.abspath(path)), path)
