"""NewReno sender with a SACK scoreboard, and the matching SACK receiver.

Segments are whole IP packets numbered from 0. The source is saturated unless
``total_segments`` caps the flow. Every arriving segment is ACKed at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

NS = 1_000_000_000

SLOW_START = "slow_start"
CONGESTION_AVOIDANCE = "congestion_avoidance"
FAST_RECOVERY = "fast_recovery"


class ProtocolError(RuntimeError):
    """An ACK the sender could not have caused; always a simulation bug."""


@dataclass(frozen=True)
class TransportConfig:
    segment_size: int = 500
    cwnd_cap: int = 64
    initial_cwnd: int = 2
    initial_ssthresh: Optional[int] = None
    dupack_threshold: int = 3
    rto_min: int = 1 * NS
    rto_initial: int = 3 * NS
    rto_max: int = 60 * NS
    ack_path_delay: Optional[int] = None
    total_segments: Optional[int] = None

    def __post_init__(self):
        if not self.cwnd_cap >= self.initial_cwnd >= 1:
            raise ValueError("need cwnd_cap >= initial_cwnd >= 1")
        if self.segment_size < 1:
            raise ValueError("segment_size must be positive")
        if self.dupack_threshold < 1:
            raise ValueError("dupack_threshold must be >= 1")
        if self.rto_min <= 0 or self.rto_initial < self.rto_min:
            raise ValueError("need 0 < rto_min <= rto_initial")
        if self.total_segments is not None and self.total_segments < 0:
            raise ValueError("total_segments must be >= 0")

    @property
    def ssthresh0(self) -> int:
        return self.cwnd_cap if self.initial_ssthresh is None else self.initial_ssthresh


@dataclass(frozen=True)
class Ack:
    cum: int                              # next expected segment
    sack: tuple[tuple[int, int], ...]     # half-open [start, end) ranges
    echo: int                             # segment that triggered the ACK


class Receiver:
    def __init__(self):
        self.rcv_next = 0
        self._ooo: set[int] = set()
        self.duplicates = 0

    def _blocks(self):
        if not self._ooo:
            return []
        seqs = sorted(self._ooo)
        blocks = []
        start = prev = seqs[0]
        for s in seqs[1:]:
            if s != prev + 1:
                blocks.append((start, prev + 1))
                start = s
            prev = s
        blocks.append((start, prev + 1))
        return blocks

    def on_packet(self, seq: int) -> Ack:
        if seq < self.rcv_next or seq in self._ooo:
            self.duplicates += 1
        elif seq == self.rcv_next:
            self.rcv_next += 1
            while self.rcv_next in self._ooo:
                self._ooo.remove(self.rcv_next)
                self.rcv_next += 1
        else:
            self._ooo.add(seq)
        blocks = self._blocks()
        first = [b for b in blocks if b[0] <= seq < b[1]]
        rest = sorted((b for b in blocks if b not in first), reverse=True)
        return Ack(self.rcv_next, tuple((first + rest)[:3]), seq)


class NewRenoSack:
    def __init__(self, config: TransportConfig, log=None):
        self.cfg = config
        self.cwnd = float(config.initial_cwnd)
        self.ssthresh = float(config.ssthresh0)
        self.phase = SLOW_START if self.cwnd < self.ssthresh else CONGESTION_AVOIDANCE
        self.snd_una = 0
        self.next_seq = 0
        self.sacked: set[int] = set()
        self.lost: set[int] = set()
        self._retx_this_episode: set[int] = set()
        self.tx_count: list[int] = []
        self.sent_at: list[int] = []
        self.dupacks = 0
        self.recover = -1
        self.srtt: Optional[int] = None
        self.rttvar: Optional[int] = None
        self.rto = config.rto_initial
        self.rto_deadline: Optional[int] = None
        self.rto_events = 0
        self.rtt_samples = 0
        self.karn_violations = 0
        self._log = log

    # -- bookkeeping ------------------------------------------------------

    @property
    def highest_sent(self) -> int:
        return self.next_seq - 1

    @property
    def highest_acked(self) -> int:
        return self.snd_una - 1

    @property
    def pipe(self) -> int:
        return self.next_seq - self.snd_una - len(self.sacked) - len(self.lost)

    def _emit(self, now, event, seq, value):
        if self._log is not None:
            self._log(now, event, seq, value)

    def _set_cwnd(self, now, value):
        value = min(value, float(self.cfg.cwnd_cap))
        if value != self.cwnd:
            self.cwnd = value
            self._emit(now, "cwnd", -1, value)

    def _arm(self, now):
        self.rto_deadline = now + self.rto if self.snd_una < self.next_seq else None

    # -- sending ----------------------------------------------------------

    def on_send_opportunity(self, now: int) -> list[tuple[int, bool]]:
        """Segments to hand to the link now, as ``(seq, is_retransmission)``."""
        out = []
        total = self.cfg.total_segments
        while self.pipe < math.floor(self.cwnd):
            if self.lost:
                seq = min(self.lost)
                self.lost.remove(seq)
                self._retx_this_episode.add(seq)
                self.tx_count[seq] += 1
                self.sent_at[seq] = now
                out.append((seq, True))
            elif total is None or self.next_seq < total:
                seq = self.next_seq
                self.next_seq += 1
                self.tx_count.append(1)
                self.sent_at.append(now)
                out.append((seq, False))
            else:
                break
        if out and self.rto_deadline is None:
            self._arm(now)
        return out

    # -- ACK processing ---------------------------------------------------

    def _rtt_sample(self, seq, sample):
        self.rtt_samples += 1
        if self.tx_count[seq] != 1:
            self.karn_violations += 1
        if self.srtt is None:
            self.srtt = sample
            self.rttvar = sample // 2
        else:
            self.rttvar = (3 * self.rttvar + abs(self.srtt - sample)) // 4
            self.srtt = (7 * self.srtt + sample) // 8
        self.rto = min(max(self.srtt + 4 * self.rttvar, self.cfg.rto_min), self.cfg.rto_max)

    def _mark_sack_losses(self):
        """Holes with at least ``dupack_threshold`` SACKed segments above."""
        if not self.sacked:
            return
        thresh = self.cfg.dupack_threshold
        above = 0
        for seq in range(max(self.sacked), self.snd_una - 1, -1):
            if seq in self.sacked:
                above += 1
            elif (above >= thresh and seq not in self.lost
                  and seq not in self._retx_this_episode):
                self.lost.add(seq)

    def _enter_recovery(self, now):
        self.ssthresh = float(max(math.floor(self.cwnd / 2), 2))
        self.recover = self.next_seq - 1
        self.phase = FAST_RECOVERY
        self._retx_this_episode.clear()
        self._set_cwnd(now, self.ssthresh)
        if self.snd_una not in self.sacked:
            self.lost.add(self.snd_una)
        self._mark_sack_losses()

    def on_ack(self, ack: Ack, now: int) -> None:
        if ack.cum > self.next_seq:
            raise ProtocolError(f"ACK {ack.cum} beyond highest sent {self.highest_sent}")
        self._emit(now, "ack", ack.cum, len(ack.sack))
        for start, end in ack.sack:
            for seq in range(max(start, ack.cum, self.snd_una), min(end, self.next_seq)):
                self.sacked.add(seq)
                self.lost.discard(seq)
        # Karn: only segments sent exactly once give RTT samples
        if (ack.cum > self.snd_una and 0 <= ack.echo < len(self.tx_count)
                and self.tx_count[ack.echo] == 1):
            self._rtt_sample(ack.echo, now - self.sent_at[ack.echo])
        if ack.cum > self.snd_una:
            newly = ack.cum - self.snd_una
            for seq in range(self.snd_una, ack.cum):
                self.sacked.discard(seq)
                self.lost.discard(seq)
            self.snd_una = ack.cum
            self.dupacks = 0
            if self.phase == FAST_RECOVERY:
                if ack.cum > self.recover:
                    self.phase = CONGESTION_AVOIDANCE
                    self._set_cwnd(now, self.ssthresh)
                else:
                    # partial ACK: the next hole is lost too
                    if (self.snd_una not in self.sacked
                            and self.snd_una not in self._retx_this_episode):
                        self.lost.add(self.snd_una)
                    self._mark_sack_losses()
            else:
                cwnd = self.cwnd
                for _ in range(newly):
                    if cwnd < self.ssthresh:
                        cwnd += 1.0
                    else:
                        cwnd += 1.0 / math.floor(cwnd)
                self._set_cwnd(now, cwnd)
                self.phase = SLOW_START if self.cwnd < self.ssthresh else CONGESTION_AVOIDANCE
            self._arm(now)
        elif ack.cum == self.snd_una and self.snd_una < self.next_seq:
            self.dupacks += 1
            if self.phase == FAST_RECOVERY:
                self._mark_sack_losses()
            elif self.snd_una > self.recover and (
                    self.dupacks >= self.cfg.dupack_threshold
                    or len(self.sacked) >= self.cfg.dupack_threshold):
                self._enter_recovery(now)

    def on_rto(self, now: int) -> bool:
        """Handle timer expiry; False when nothing was outstanding."""
        if self.snd_una >= self.next_seq:
            self.rto_deadline = None
            return False
        self.rto_events += 1
        self.ssthresh = float(max(math.floor(self.cwnd / 2), 2))
        self._set_cwnd(now, 1.0)
        self.phase = SLOW_START
        self.rto = min(self.rto * 2, self.cfg.rto_max)
        self._emit(now, "rto", self.snd_una, self.rto)
        self.dupacks = 0
        self.recover = self.next_seq - 1
        self._retx_this_episode.clear()
        for seq in range(self.snd_una, self.next_seq):
            if seq not in self.sacked:
                self.lost.add(seq)
        self._arm(now)
        return True
