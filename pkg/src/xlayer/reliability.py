"""Link-layer reliability schemes applied to a physical trace.

A transform walks the trace slots in order and assigns each one to a logical
unit: a new data LLDU, an FEC repair unit, an SR-ARQ retransmission or a
HARQ-II incremental repair unit. Feedback-driven units take the first free
slot whose start is at or after the NACK reaches the sender. Units that are
not needed by anybody still consume their slot, so the data stream is
saturated and independent of the traffic that later uses it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .trace import (PhyTrace, TraceError, erasure_bursts, format_rows, read_header,
                    slot_duration_ns)

LINK_MAGIC = "#clift-linktrace v1"

SCHEME_KINDS = ("none", "fec", "sr-arq", "harq2")


@dataclass(frozen=True)
class ReliabilityScheme:
    """Scheme variant plus its parameters.

    ``feedback_delay`` is the one-way NACK travel time. ``detection_latency``
    is how long after a slot starts the receiver knows it was erased; ``None``
    means the trace's nominal decode latency.
    """

    kind: str = "none"
    n_d: int = 0
    n_r: int = 0
    max_retx: int = 0
    repair_per_round: int = 0
    max_rounds: int = 0
    feedback_delay: int = 0
    detection_latency: Optional[int] = None

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValueError(f"unknown scheme {self.kind!r}; valid: {', '.join(SCHEME_KINDS)}")
        if self.kind in ("fec", "harq2"):
            if self.n_d < 1:
                raise ValueError("n_d must be >= 1")
            if self.n_r < 0:
                raise ValueError("n_r must be >= 0")
        if self.kind == "harq2":
            if self.n_r < 1:
                raise ValueError("HARQ-II needs n_r >= 1")
            if self.repair_per_round < 1:
                raise ValueError("repair_per_round must be >= 1")
            if self.max_rounds < 0:
                raise ValueError("max_rounds must be >= 0")
        if self.max_retx < 0:
            raise ValueError("max_retx must be >= 0")
        if self.feedback_delay < 0:
            raise ValueError("feedback_delay must be >= 0")
        if self.detection_latency is not None and self.detection_latency <= 0:
            raise ValueError("detection_latency must be positive")

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def fec(cls, n_d, n_r):
        return cls("fec", n_d=n_d, n_r=n_r)

    @classmethod
    def sr_arq(cls, max_retx=3, feedback_delay=0, detection_latency=None):
        return cls("sr-arq", max_retx=max_retx, feedback_delay=feedback_delay,
                   detection_latency=detection_latency)

    @classmethod
    def harq2(cls, n_d, n_r, repair_per_round=None, max_rounds=3,
              feedback_delay=0, detection_latency=None):
        return cls("harq2", n_d=n_d, n_r=n_r,
                   repair_per_round=n_r if repair_per_round is None else repair_per_round,
                   max_rounds=max_rounds, feedback_delay=feedback_delay,
                   detection_latency=detection_latency)

    def label(self) -> str:
        if self.kind == "fec":
            return f"fec:{self.n_d},{self.n_d + self.n_r}"
        if self.kind == "sr-arq":
            return f"sr-arq:{self.max_retx}"
        if self.kind == "harq2":
            return (f"harq2:{self.n_d},{self.n_d + self.n_r},"
                    f"{self.repair_per_round},{self.max_rounds}")
        return "none"


def parse_scheme(text: str, feedback_delay=0, detection_latency=None) -> ReliabilityScheme:
    """Parse ``none``, ``fec:ND,ND+NR``, ``sr-arq[:MAXRETX]`` or
    ``harq2:ND,ND+NR[,PER_ROUND[,MAX_ROUNDS]]``.

    FEC and HARQ take the total block size, matching the usual
    ``(N_D, N_D+N_R)`` notation.
    """
    kind, _, args = text.strip().partition(":")
    kind = kind.lower()
    try:
        nums = [int(x) for x in args.split(",")] if args else []
    except ValueError:
        raise ValueError(f"bad scheme arguments in {text!r}") from None
    if kind == "none" and not nums:
        return ReliabilityScheme.none()
    if kind == "fec" and len(nums) == 2:
        return ReliabilityScheme.fec(nums[0], nums[1] - nums[0])
    if kind in ("sr-arq", "arq") and len(nums) <= 1:
        return ReliabilityScheme.sr_arq(nums[0] if nums else 3, feedback_delay,
                                        detection_latency)
    if kind in ("harq2", "harq") and 2 <= len(nums) <= 4:
        n_d, total = nums[:2]
        per_round = nums[2] if len(nums) > 2 else None
        rounds = nums[3] if len(nums) > 3 else 3
        return ReliabilityScheme.harq2(n_d, total - n_d, per_round, rounds,
                                       feedback_delay, detection_latency)
    raise ValueError(
        f"unknown scheme {text!r}; valid: none, fec:ND,TOTAL, sr-arq[:MAXRETX], "
        "harq2:ND,TOTAL[,PER_ROUND[,MAX_ROUNDS]]")


@dataclass(frozen=True, eq=False)
class LinkTrace:
    """Per data-LLDU outcomes after a reliability scheme.

    ``dt_prime`` is delivery instant minus ``td`` (0 when dropped).
    ``drop_at`` is the instant the link layer gives up on a dropped unit
    (0 when delivered). ``cost`` is the channel units spent on the unit,
    including its share of repair units and its own retransmissions.
    """

    td: np.ndarray
    dt_prime: np.ndarray
    delivered: np.ndarray
    retx_count: np.ndarray
    slots_through: np.ndarray
    drop_at: np.ndarray
    exhausted: np.ndarray
    cost: Optional[np.ndarray]
    scheme: ReliabilityScheme
    units_sent: int
    lldu_size: int
    capacity: int
    slot_duration: int
    source: Optional[PhyTrace] = None

    def __post_init__(self):
        for name in ("td", "dt_prime", "delivered", "retx_count",
                     "slots_through", "drop_at", "exhausted", "cost"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.ascontiguousarray(arr)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)

    def __len__(self):
        return int(self.td.shape[0])

    @property
    def resolved_at(self) -> np.ndarray:
        """Delivery instant for delivered units, give-up instant otherwise."""
        return np.where(self.delivered, self.td + self.dt_prime, self.drop_at)

    def same_outcomes(self, other: "LinkTrace") -> bool:
        """Bit equality of every per-unit column and the slot budget."""
        cols = ("td", "dt_prime", "delivered", "retx_count", "slots_through",
                "drop_at", "exhausted", "cost")
        if self.units_sent != other.units_sent:
            return False
        for c in cols:
            a, b = getattr(self, c), getattr(other, c)
            if (a is None) != (b is None):
                return False
            if a is not None and not np.array_equal(a, b):
                return False
        return True


def _detection(trace: PhyTrace, scheme: ReliabilityScheme) -> int:
    if scheme.detection_latency is not None:
        return int(scheme.detection_latency)
    return trace.nominal_decode_latency()


def _wrap(trace, scheme, result):
    cols, units = result
    td, dtp, dl, retx, thr, drop, exh, cost = cols
    return LinkTrace(td, dtp, dl, retx, thr, drop, exh, cost, scheme, int(units),
                     trace.lldu_size, trace.capacity, trace.slot_duration, trace)


def transform_none(trace: PhyTrace, detection_latency=None) -> LinkTrace:
    scheme = ReliabilityScheme("none", detection_latency=detection_latency)
    return _wrap(trace, scheme,
                 kernels.transform_none_arrays(trace.td, trace.dt, _detection(trace, scheme)))


def transform_fec(trace: PhyTrace, n_d: int, n_r: int, detection_latency=None) -> LinkTrace:
    scheme = ReliabilityScheme("fec", n_d=n_d, n_r=n_r, detection_latency=detection_latency)
    return _wrap(trace, scheme,
                 kernels.fec(trace.td, trace.dt, n_d, n_r, _detection(trace, scheme)))


def transform_sr_arq(trace: PhyTrace, max_retx: int, feedback_delay: int,
                     detection_latency=None) -> LinkTrace:
    scheme = ReliabilityScheme.sr_arq(max_retx, feedback_delay, detection_latency)
    return _wrap(trace, scheme,
                 kernels.sr_arq(trace.td, trace.dt, max_retx, feedback_delay,
                                _detection(trace, scheme)))


def transform_harq2(trace: PhyTrace, n_d: int, n_r: int, repair_per_round=None,
                    max_rounds: int = 3, feedback_delay: int = 0,
                    detection_latency=None) -> LinkTrace:
    scheme = ReliabilityScheme.harq2(n_d, n_r, repair_per_round, max_rounds,
                                     feedback_delay, detection_latency)
    return _wrap(trace, scheme,
                 kernels.harq2(trace.td, trace.dt, n_d, n_r, scheme.repair_per_round,
                               max_rounds, feedback_delay, _detection(trace, scheme)))


def apply_scheme(trace: PhyTrace, scheme: ReliabilityScheme) -> LinkTrace:
    det = scheme.detection_latency
    if scheme.kind == "none":
        return transform_none(trace, det)
    if scheme.kind == "fec":
        return transform_fec(trace, scheme.n_d, scheme.n_r, det)
    if scheme.kind == "sr-arq":
        return transform_sr_arq(trace, scheme.max_retx, scheme.feedback_delay, det)
    return transform_harq2(trace, scheme.n_d, scheme.n_r, scheme.repair_per_round,
                           scheme.max_rounds, scheme.feedback_delay, det)


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------


def distribution(counts) -> dict[int, float]:
    """Normalised histogram of non-negative integer samples."""
    counts = np.asarray(counts, dtype=np.int64)
    if counts.size == 0:
        return {}
    values, n = np.unique(counts, return_counts=True)
    total = counts.size
    return {int(v): int(c) / total for v, c in zip(values, n)}


@dataclass(frozen=True)
class LinkStats:
    data_units: int
    delivered_units: int
    dropped_units: int
    units_sent: int
    throughput_efficiency: float
    delay_hist_ms: dict
    retx_dist: dict
    erasure_bursts: dict

    def to_dict(self):
        return {
            "data_units": self.data_units,
            "delivered_units": self.delivered_units,
            "dropped_units": self.dropped_units,
            "units_sent": self.units_sent,
            "throughput_efficiency": self.throughput_efficiency,
            "delay_hist_ms": {str(k): v for k, v in self.delay_hist_ms.items()},
            "retx_dist": {str(k): v for k, v in self.retx_dist.items()},
            "erasure_bursts": {str(k): v for k, v in self.erasure_bursts.items()},
        }


def link_layer_stats(lt: LinkTrace) -> LinkStats:
    if len(lt) == 0:
        raise ValueError("empty link trace")
    delivered = int(lt.delivered.sum())
    delays_ms = lt.dt_prime[lt.delivered] // 1_000_000
    hist = {}
    if delays_ms.size:
        values, counts = np.unique(delays_ms, return_counts=True)
        hist = {int(v): int(c) for v, c in zip(values, counts)}
    return LinkStats(
        data_units=len(lt),
        delivered_units=delivered,
        dropped_units=len(lt) - delivered,
        units_sent=lt.units_sent,
        throughput_efficiency=delivered / lt.units_sent,
        delay_hist_ms=hist,
        retx_dist=distribution(lt.retx_count),
        erasure_bursts=erasure_bursts(lt.source) if lt.source is not None else {},
    )


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------


def write_linktrace(lt: LinkTrace) -> bytes:
    """Serialise outcomes; rows are
    ``<data_index> <td_ns> <dt_prime_ns> <D|X> <retx_count> <drop_ns>``."""
    head = [
        LINK_MAGIC,
        f"#capacity_bps={lt.capacity} lldu_size_bytes={lt.lldu_size} "
        f"scheme={lt.scheme.label()} units_sent={lt.units_sent}",
    ]
    exhausted = np.flatnonzero(lt.exhausted)
    if exhausted.size:
        head.append("#meta exhausted=" + ",".join(str(int(i)) for i in exhausted))
    n = len(lt)
    if n == 0:
        return ("\n".join(head) + "\n").encode("utf-8")
    body = format_rows((np.arange(n), lt.td, lt.dt_prime,
                        np.zeros(n, np.int64), lt.retx_count, lt.drop_at))
    # status column placeholder swapped for the letter code
    lines = body.split("\n")
    status = np.where(lt.delivered, "D", "X")
    out = []
    for line, st in zip(lines, status):
        a, b, c, _, e, f = line.split(" ")
        out.append(f"{a} {b} {c} {st} {e} {f}")
    return ("\n".join(head) + "\n" + "\n".join(out) + "\n").encode("utf-8")


def parse_linktrace(data: bytes) -> LinkTrace:
    text = bytes(data).decode("utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    params, meta, rows = read_header(lines, LINK_MAGIC)
    try:
        capacity = int(params["capacity_bps"])
        lldu_size = int(params["lldu_size_bytes"])
        units_sent = int(params.get("units_sent", "0"))
    except (KeyError, ValueError):
        raise TraceError("bad link trace header", 2) from None
    scheme = parse_scheme(params.get("scheme", "none"))
    n = len(rows)
    cols = np.zeros((6, n), dtype=np.int64)
    delivered = np.zeros(n, np.bool_)
    for i, (ln, text_row) in enumerate(rows):
        parts = text_row.split(" ")
        if len(parts) != 6 or parts[3] not in ("D", "X"):
            raise TraceError("malformed link trace row", ln)
        try:
            cols[:, i] = [int(parts[0]), int(parts[1]), int(parts[2]), 0,
                          int(parts[4]), int(parts[5])]
        except ValueError:
            raise TraceError("non-integer field", ln) from None
        if cols[0, i] != i:
            raise TraceError("data_index out of order", ln)
        delivered[i] = parts[3] == "D"
    exhausted = np.zeros(n, np.bool_)
    if meta.get("exhausted"):
        exhausted[[int(x) for x in meta["exhausted"].split(",")]] = True
    return LinkTrace(cols[1], cols[2], delivered, cols[4], np.full(n, -1, np.int64),
                     cols[5], exhausted, None, scheme, units_sent, lldu_size,
                     capacity, slot_duration_ns(lldu_size, capacity))
