"""Queue that schedules IP packets onto the data LLDUs of a link trace.

An IP packet of ``size`` bytes needs ``m = size // lldu_size + 1`` LLDUs. On
arrival at ``Te`` it claims the LLDU whose slot window contains ``Te`` (or the
next unclaimed one when earlier packets already hold it) and the ``m - 1``
following ones. Its transmission date ``Td`` is the latest resolution instant
of those LLDUs minus its own airtime ``Et``.

Departures are driven by one timer. The channel carries one packet at a time:
whenever it is free, the waiting packet with the earliest ``max(Td, Te)``
goes, and a packet whose date falls while the channel is busy is pushed to
the end of the current occupancy. Dropped packets occupy the channel too.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .reliability import LinkTrace

DELIVERED = "delivered"
DROPPED = "dropped"
QUEUE_DROP = "qdrop"
EXHAUSTED = "exhausted"
IN_FLIGHT = "in_flight"


@dataclass(frozen=True)
class QueueConfig:
    capacity_packets: int = 50
    one_way_propagation: int = 0

    def __post_init__(self):
        if self.capacity_packets < 1:
            raise ValueError("capacity_packets must be >= 1")
        if self.one_way_propagation < 0:
            raise ValueError("one_way_propagation must be >= 0")


@dataclass
class IpPacketRecord:
    id: int
    size: int
    te: int
    n: int = -1
    m: int = 0
    et: int = 0
    td: int = -1
    eff_departure: int = -1
    fate: str = ""
    fate_at: int = -1

    @property
    def ready(self) -> int:
        return max(self.td, self.te)

    @property
    def queuing_delay(self) -> int:
        if self.eff_departure < 0:
            return 0
        return max(self.eff_departure - self.te, 0)

    @property
    def claimed(self) -> bool:
        return self.fate in (DELIVERED, DROPPED)

    def row(self) -> str:
        return (f"{self.id} {self.te} {self.n} {self.m} {self.td} {self.eff_departure} "
                f"{self.fate} {self.fate_at} {self.queuing_delay}")


PACKET_LOG_HEADER = "id Te_ns n m Td_ns eff_departure_ns fate fate_instant_ns queuing_delay_ns"


def lldu_count(size: int, lldu_size: int) -> int:
    # integer part + 1, applied literally: exact multiples get one spare LLDU
    return size // lldu_size + 1


def lookup_index(td: np.ndarray, te: int) -> int:
    """Index n with td[n] <= te < td[n+1]; 0 when te precedes the trace."""
    n = int(np.searchsorted(td, te, side="right")) - 1
    return max(n, 0)


def departure_date(resolved: np.ndarray, n: int, m: int, et: int) -> int:
    """Latest resolution instant over LLDUs ``n .. n+m-1``, minus airtime.

    May precede the packet's arrival when a block recovery releases several
    LLDUs at once.
    """
    return int(resolved[n:n + m].max()) - et


def packet_fate(rec: IpPacketRecord, link: LinkTrace, one_way: int):
    """(fate, instant) of a claimed packet whose departure is known.

    One lost LLDU loses the whole packet; the drop is a sender-side event at
    the departure instant.
    """
    sl = slice(rec.n, rec.n + rec.m)
    if bool(link.delivered[sl].all()):
        latest = int((link.td[sl] + link.dt_prime[sl]).max())
        return DELIVERED, max(latest + one_way, rec.eff_departure + rec.et + one_way)
    return DROPPED, rec.eff_departure


def resolve_overlap(records: list[IpPacketRecord], one_way: int,
                    link: Optional[LinkTrace] = None) -> list[IpPacketRecord]:
    """Batch channel scheduling of claimed packets given in arrival order.

    Sets ``eff_departure`` and the fate instant. Without ``link`` each
    record's ``fate`` must already say delivered or dropped.
    """
    claimed = [r for r in records if r.n >= 0]
    waiting = []
    free = None
    i = 0
    while i < len(claimed) or waiting:
        if not waiting:
            r = claimed[i]
            heapq.heappush(waiting, (r.ready, r.id, r))
            i += 1
            continue
        t = waiting[0][0] if free is None else max(free, waiting[0][0])
        if i < len(claimed) and claimed[i].te <= t:
            r = claimed[i]
            heapq.heappush(waiting, (r.ready, r.id, r))
            i += 1
            continue
        _, _, r = heapq.heappop(waiting)
        r.eff_departure = t
        free = t + r.et
        if link is not None:
            r.fate, r.fate_at = packet_fate(r, link, one_way)
        elif r.fate == DELIVERED:
            r.fate_at = t + r.et + one_way
        else:
            r.fate_at = t
    return records


class LinkQueue:
    def __init__(self, link: LinkTrace, config: QueueConfig):
        self.link = link
        self.config = config
        self._resolved = link.resolved_at
        self._td = np.asarray(link.td)
        self.cursor = 0
        self._channel_free: Optional[int] = None
        self._waiting: list[tuple[int, int, IpPacketRecord]] = []
        self.claimed: list[IpPacketRecord] = []

    def __len__(self):
        return len(self._waiting)

    def next_timer(self) -> Optional[tuple[int, int]]:
        """(instant, packet id) of the next departure, or None when idle."""
        if not self._waiting:
            return None
        ready, pid, _ = self._waiting[0]
        if self._channel_free is not None and self._channel_free > ready:
            return self._channel_free, pid
        return ready, pid

    def occupancy(self, now: int) -> int:
        # a departure due exactly now goes out regardless of arrivals at now
        nxt = self.next_timer()
        return len(self._waiting) - (1 if nxt is not None and nxt[0] <= now else 0)

    def enqueue(self, pid: int, size: int, te: int) -> IpPacketRecord:
        link = self.link
        rec = IpPacketRecord(pid, size, te, m=lldu_count(size, link.lldu_size))
        rec.et = rec.m * link.slot_duration
        if self.occupancy(te) >= self.config.capacity_packets:
            rec.fate, rec.fate_at = QUEUE_DROP, te
            return rec
        n = max(lookup_index(self._td, te), self.cursor) if len(link) else 0
        if n + rec.m > len(link):
            self.cursor = len(link)
            rec.fate, rec.fate_at = EXHAUSTED, te
            return rec
        rec.n = n
        self.cursor = n + rec.m
        rec.td = departure_date(self._resolved, n, rec.m, rec.et)
        rec.fate = DELIVERED if bool(link.delivered[n:n + rec.m].all()) else DROPPED
        heapq.heappush(self._waiting, (rec.ready, pid, rec))
        self.claimed.append(rec)
        return rec

    def dequeue(self, now: int) -> IpPacketRecord:
        """Send the packet the timer fired for."""
        nxt = self.next_timer()
        if nxt is None or nxt[0] != now:
            raise RuntimeError(f"dequeue at {now} but timer is {nxt}")
        _, _, rec = heapq.heappop(self._waiting)
        rec.eff_departure = now
        self._channel_free = now + rec.et
        rec.fate, rec.fate_at = packet_fate(rec, self.link, self.config.one_way_propagation)
        return rec

    def abandon_waiting(self) -> None:
        """Mark packets still queued at the horizon as in flight."""
        for _, _, rec in self._waiting:
            rec.fate, rec.fate_at = IN_FLIGHT, -1

    def claimed_lldus(self) -> np.ndarray:
        """Data-LLDU indices claimed so far, in claim order."""
        if not self.claimed:
            return np.zeros(0, np.int64)
        return np.concatenate([np.arange(r.n, r.n + r.m) for r in self.claimed])
