"""Deterministic discrete-event core tying the transport to the link queue."""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .link_queue import DELIVERED, IpPacketRecord, LinkQueue, QueueConfig
from .reliability import LinkTrace
from .transport import NewRenoSack, Receiver, TransportConfig

NS = 1_000_000_000

APP_SEND = "app_send"
PACKET_ARRIVAL = "packet_arrival_at_queue"
LINK_DEPARTURE = "link_departure"
LINK_DELIVERY = "link_delivery"
LINK_DROP = "link_drop"
ACK_ARRIVAL = "ack_arrival"
RTO_FIRE = "rto_fire"


class SimulationError(RuntimeError):
    """Broken engine invariant."""


@dataclass(order=True)
class Event:
    time: int
    seq: int
    kind: str = field(compare=False)
    payload: object = field(compare=False, default=None)


class EventQueue:
    """Min-heap on ``(time, seq)`` with lazy cancellation."""

    def __init__(self):
        self._heap: list[Event] = []
        self._counter = itertools.count()
        self._cancelled: set[int] = set()
        self.now = 0

    def schedule(self, time: int, kind: str, payload=None) -> int:
        if time < self.now:
            raise SimulationError(f"{kind} scheduled at {time} < now {self.now}")
        ev = Event(int(time), next(self._counter), kind, payload)
        heapq.heappush(self._heap, ev)
        return ev.seq

    def cancel(self, handle: Optional[int]) -> None:
        if handle is not None:
            self._cancelled.add(handle)

    def pop(self) -> Optional[Event]:
        while self._heap:
            ev = heapq.heappop(self._heap)
            if ev.seq in self._cancelled:
                self._cancelled.discard(ev.seq)
                continue
            self.now = ev.time
            return ev
        return None

    def peek_time(self) -> Optional[int]:
        while self._heap and self._heap[0].seq in self._cancelled:
            self._cancelled.discard(heapq.heappop(self._heap).seq)
        return self._heap[0].time if self._heap else None


@dataclass(frozen=True)
class SimConfig:
    link: LinkTrace
    queue: QueueConfig = field(default_factory=QueueConfig)
    transport: TransportConfig = field(default_factory=TransportConfig)
    duration: int = 400 * NS

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be positive")

    @property
    def ack_delay(self) -> int:
        d = self.transport.ack_path_delay
        return self.queue.one_way_propagation if d is None else d


@dataclass
class TransportEvent:
    time: int
    event: str
    seq: int
    value: object

    def row(self) -> str:
        v = self.value
        text = f"{v:.6f}" if isinstance(v, float) else str(v)
        return f"{self.time} {self.event} {self.seq} {text}"


TRANSPORT_LOG_HEADER = "time_ns event seq value"


@dataclass
class SimResult:
    config: SimConfig
    packets: list[IpPacketRecord]
    transport: list[TransportEvent]
    flow_stats: dict
    sender: NewRenoSack
    receiver: Receiver
    events_executed: int = 0


def flow_link_stats(link: LinkTrace, claimed: list[IpPacketRecord],
                    duration: int) -> dict:
    """Channel usage charged to the flow's LLDUs.

    ``sent_units`` includes each claimed LLDU's share of repair units and its
    own retransmissions; ``useful_units`` counts LLDUs of delivered packets.
    Only packets whose channel occupancy starts inside the horizon count.
    """
    inside = [r for r in claimed if 0 <= r.eff_departure <= duration]
    if not inside:
        return {"claimed_lldus": 0, "useful_units": 0, "sent_units": 0.0,
                "retx_dist": {}, "delivered_lldus": 0, "dropped_lldus": 0}
    idx = np.concatenate([np.arange(r.n, r.n + r.m) for r in inside])
    useful = sum(r.m for r in inside if r.fate == DELIVERED)
    cost = link.cost[idx] if link.cost is not None else np.ones(idx.size)
    retx = link.retx_count[idx]
    values, counts = np.unique(retx, return_counts=True)
    delivered = int(link.delivered[idx].sum())
    return {
        "claimed_lldus": int(idx.size),
        "useful_units": int(useful),
        "sent_units": float(cost.sum()),
        "retx_dist": {str(int(v)): int(c) / idx.size for v, c in zip(values, counts)},
        "delivered_lldus": delivered,
        "dropped_lldus": int(idx.size) - delivered,
    }


class Simulation:
    def __init__(self, config: SimConfig, trace_hook: Optional[Callable] = None):
        self.config = config
        self.events = EventQueue()
        self.queue = LinkQueue(config.link, config.queue)
        self.transport_log: list[TransportEvent] = []
        self.sender = NewRenoSack(config.transport, log=self._log)
        self.receiver = Receiver()
        self.packets: list[IpPacketRecord] = []
        self._pkt_seq: list[int] = []
        self._departure_handle: Optional[int] = None
        self._departure_at: Optional[int] = None
        self._rto_handle: Optional[int] = None
        self._rto_at: Optional[int] = None
        self._hook = trace_hook
        self.executed = 0

    def _log(self, time, event, seq, value):
        self.transport_log.append(TransportEvent(time, event, seq, value))

    # -- timers -----------------------------------------------------------

    def _sync_departure_timer(self):
        nxt = self.queue.next_timer()
        at = None if nxt is None else nxt[0]
        if at != self._departure_at:
            self.events.cancel(self._departure_handle)
            self._departure_handle = None if at is None else \
                self.events.schedule(at, LINK_DEPARTURE)
            self._departure_at = at

    def _sync_rto_timer(self):
        at = self.sender.rto_deadline
        if at != self._rto_at:
            self.events.cancel(self._rto_handle)
            self._rto_handle = None if at is None else self.events.schedule(at, RTO_FIRE)
            self._rto_at = at

    # -- handlers ---------------------------------------------------------

    def _send(self, now):
        for seq, is_retx in self.sender.on_send_opportunity(now):
            pid = len(self._pkt_seq)
            self._pkt_seq.append(seq)
            self._log(now, "retx" if is_retx else "send", seq, pid)
            self.events.schedule(now, PACKET_ARRIVAL, pid)
        self._sync_rto_timer()

    def _on_arrival(self, now, pid):
        rec = self.queue.enqueue(pid, self.config.transport.segment_size, now)
        self.packets.append(rec)
        if rec.claimed:
            self._sync_departure_timer()

    def _on_departure(self, now):
        self._departure_handle = None
        self._departure_at = None
        rec = self.queue.dequeue(now)
        if rec.fate == DELIVERED:
            self.events.schedule(rec.fate_at, LINK_DELIVERY, rec.id)
        else:
            self.events.schedule(now, LINK_DROP, rec.id)
        self._sync_departure_timer()

    def _on_delivery(self, now, pid):
        ack = self.receiver.on_packet(self._pkt_seq[pid])
        self.events.schedule(now + self.config.ack_delay, ACK_ARRIVAL, ack)

    def _on_ack(self, now, ack):
        self.sender.on_ack(ack, now)
        self._sync_rto_timer()
        self._send(now)

    def _on_rto(self, now):
        self._rto_handle = None
        self._rto_at = None
        self.sender.on_rto(now)
        self._sync_rto_timer()
        self._send(now)

    def run(self) -> SimResult:
        cfg = self.config
        if len(cfg.link) > 0:
            self.events.schedule(0, APP_SEND)
        last = -1
        while True:
            t = self.events.peek_time()
            if t is None or t > cfg.duration:
                break
            ev = self.events.pop()
            if ev.time < last:
                raise SimulationError("clock went backwards")
            last = ev.time
            self.executed += 1
            if self._hook is not None:
                self._hook(ev)
            kind = ev.kind
            if kind == ACK_ARRIVAL:
                self._on_ack(ev.time, ev.payload)
            elif kind == PACKET_ARRIVAL:
                self._on_arrival(ev.time, ev.payload)
            elif kind == LINK_DEPARTURE:
                self._on_departure(ev.time)
            elif kind == LINK_DELIVERY:
                self._on_delivery(ev.time, ev.payload)
            elif kind == RTO_FIRE:
                self._on_rto(ev.time)
            elif kind == APP_SEND:
                self._send(ev.time)
            elif kind == LINK_DROP:
                pass
            else:  # pragma: no cover
                raise SimulationError(f"unknown event {kind}")
        self.queue.abandon_waiting()
        stats = flow_link_stats(cfg.link, self.queue.claimed, cfg.duration)
        return SimResult(cfg, self.packets, self.transport_log, stats,
                         self.sender, self.receiver, self.executed)


def run(config: SimConfig) -> SimResult:
    return Simulation(config).run()
