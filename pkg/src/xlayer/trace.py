"""Physical-layer slot traces: representation, text format and a synthetic
Gilbert-Elliott generator.

File format (UTF-8 text)::

    #clift-trace v1
    #capacity_bps=2300000 lldu_size_bytes=33
    #meta source=gilbert-elliott
    0 0 35500000
    1 114783 0

Each row is ``<index> <td_ns> <dt_ns>``. ``td`` is the slot start. A decode
latency of 0 means the slot was erased; a real zero latency is written as 1.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import BinaryIO, Mapping

import numpy as np

from . import kernels

MAGIC = "#clift-trace v1"
NS_PER_S = 1_000_000_000
DEFAULT_DECODE_LATENCY = 35_500_000


class TraceError(ValueError):
    """Malformed or inconsistent trace data."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def slot_duration_ns(lldu_size: int, capacity: int) -> int:
    """Airtime of one LLDU, rounded to the nearest ns (ties to even)."""
    num = lldu_size * 8 * NS_PER_S
    q, r = divmod(num, capacity)
    if 2 * r > capacity or (2 * r == capacity and q % 2 == 1):
        q += 1
    return q


def _min_spacing_ns(lldu_size, capacity):
    # Exact airtime floored: traces written by tools that truncate instead of
    # rounding stay valid.
    return lldu_size * 8 * NS_PER_S // capacity


@dataclass(frozen=True, eq=False)
class PhyTrace:
    index: np.ndarray
    td: np.ndarray
    dt: np.ndarray
    lldu_size: int
    capacity: int
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("index", "td", "dt"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "meta", dict(self.meta))
        validate(self)

    @property
    def slot_duration(self) -> int:
        return slot_duration_ns(self.lldu_size, self.capacity)

    @property
    def erased(self) -> np.ndarray:
        return self.dt == 0

    def __len__(self):
        return int(self.td.shape[0])

    def __eq__(self, other):
        if not isinstance(other, PhyTrace):
            return NotImplemented
        return (
            self.lldu_size == other.lldu_size
            and self.capacity == other.capacity
            and self.meta == other.meta
            and np.array_equal(self.index, other.index)
            and np.array_equal(self.td, other.td)
            and np.array_equal(self.dt, other.dt)
        )

    def nominal_decode_latency(self) -> int:
        """Most frequent non-zero decode latency (smallest on ties)."""
        good = self.dt[self.dt != 0]
        if good.size == 0:
            return self.slot_duration
        values, counts = np.unique(good, return_counts=True)
        return int(values[np.argmax(counts)])

    @classmethod
    def from_arrays(cls, td, dt, lldu_size, capacity, meta=None):
        td = np.asarray(td, dtype=np.int64)
        return cls(np.arange(td.shape[0], dtype=np.int64), td, dt,
                   lldu_size, capacity, meta or {})


def validate(trace: PhyTrace) -> None:
    if trace.lldu_size <= 0:
        raise TraceError("lldu_size must be positive")
    if trace.capacity <= 0:
        raise TraceError("capacity must be positive")
    n = trace.td.shape[0]
    if n == 0:
        raise TraceError("trace has no slots")
    if not (trace.index.shape[0] == n == trace.dt.shape[0]):
        raise TraceError("column lengths differ")
    bad = _first_violation(trace)
    if bad is not None:
        row, why = bad
        raise TraceError(f"slot {row}: {why}")


def _first_violation(trace):
    """(row, reason) for the first slot breaking an invariant, else None."""
    td, dt, idx = trace.td, trace.dt, trace.index
    spacing = _min_spacing_ns(trace.lldu_size, trace.capacity)
    airtime = trace.slot_duration
    checks = []
    if idx[0] < 0:
        checks.append((0, "negative index"))
    if td[0] < 0:
        checks.append((0, "negative td"))
    hits = np.flatnonzero(np.diff(idx) <= 0)
    if hits.size:
        checks.append((int(hits[0]) + 1, "index not increasing"))
    hits = np.flatnonzero(np.diff(td) < spacing)
    if hits.size:
        checks.append((int(hits[0]) + 1, "td spacing shorter than slot airtime"))
    hits = np.flatnonzero(dt < 0)
    if hits.size:
        checks.append((int(hits[0]), "negative dt"))
    hits = np.flatnonzero((dt > 0) & (dt < airtime))
    if hits.size:
        checks.append((int(hits[0]), "decode latency shorter than slot airtime"))
    if not checks:
        return None
    return min(checks)


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------


def _parse_header_fields(text, line):
    fields = {}
    for part in text.split():
        key, sep, value = part.partition("=")
        if not sep or not key:
            raise TraceError(f"bad header field {part!r}", line)
        fields[key] = value
    return fields


def _header_int(fields, key, line):
    try:
        return int(fields[key])
    except KeyError:
        raise TraceError(f"header missing {key}", line) from None
    except ValueError:
        raise TraceError(f"header {key} is not an integer", line) from None


def read_header(lines, magic):
    """Split a text body into header params, ``#meta`` pairs and data rows.

    Data rows come back as ``(line_number, text)`` pairs.
    """
    it = iter(enumerate(lines, start=1))
    try:
        _, first = next(it)
    except StopIteration:
        raise TraceError("empty input", 1) from None
    if first.rstrip("\n") != magic:
        raise TraceError(f"expected {magic!r}", 1)
    try:
        ln, second = next(it)
    except StopIteration:
        raise TraceError("missing parameter header", 2) from None
    second = second.rstrip("\n")
    if not second.startswith("#"):
        raise TraceError("missing parameter header", ln)
    params = _parse_header_fields(second[1:], ln)
    meta = {}
    rows = []
    for ln, raw in it:
        text = raw.rstrip("\n")
        if text.startswith("#meta "):
            if rows:
                raise TraceError("#meta after data rows", ln)
            key, sep, value = text[6:].partition("=")
            if not sep or not key or " " in key:
                raise TraceError("bad #meta line", ln)
            meta[key] = value
        elif text.startswith("#"):
            raise TraceError("unexpected header line", ln)
        else:
            rows.append((ln, text))
    return params, meta, rows


def _split_rows(rows, ncols):
    out = []
    for ln, text in rows:
        parts = text.split(" ")
        if len(parts) != ncols:
            raise TraceError(f"expected {ncols} columns, got {len(parts)}", ln)
        out.append((ln, parts))
    return out


def parse_trace(stream: BinaryIO | bytes) -> PhyTrace:
    """Read a trace from bytes or a binary stream."""
    data = stream if isinstance(stream, (bytes, bytearray)) else stream.read()
    try:
        text = bytes(data).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise TraceError(f"not UTF-8: {exc}") from None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    params, meta, rows = read_header(lines, MAGIC)
    capacity = _header_int(params, "capacity_bps", 2)
    lldu_size = _header_int(params, "lldu_size_bytes", 2)
    if capacity <= 0 or lldu_size <= 0:
        raise TraceError("capacity and lldu size must be positive", 2)
    if not rows:
        raise TraceError("trace has no slots", len(lines) + 1)
    table = np.empty((len(rows), 3), dtype=np.int64)
    for i, (ln, parts) in enumerate(_split_rows(rows, 3)):
        try:
            table[i] = [int(p) for p in parts]
        except (ValueError, OverflowError):
            raise TraceError("non-integer field", ln) from None
    probe = PhyTrace.__new__(PhyTrace)
    for name, col in zip(("index", "td", "dt"), table.T):
        object.__setattr__(probe, name, np.ascontiguousarray(col))
    object.__setattr__(probe, "lldu_size", lldu_size)
    object.__setattr__(probe, "capacity", capacity)
    bad = _first_violation(probe)
    if bad is not None:
        row, why = bad
        raise TraceError(why, rows[row][0])
    return PhyTrace(table[:, 0], table[:, 1], table[:, 2], lldu_size, capacity, meta)


def format_rows(columns) -> str:
    """Space-joined integer rows; fast path for large traces."""
    stacked = np.column_stack(columns)
    buf = io.StringIO()
    np.savetxt(buf, stacked, fmt="%d", delimiter=" ", newline="\n")
    return buf.getvalue()


def write_trace(trace: PhyTrace) -> bytes:
    validate(trace)
    head = [MAGIC, f"#capacity_bps={trace.capacity} lldu_size_bytes={trace.lldu_size}"]
    for key, value in trace.meta.items():
        if not key or " " in key or "=" in key or "\n" in key + value:
            raise TraceError(f"meta key/value not serialisable: {key!r}")
        head.append(f"#meta {key}={value}")
    body = format_rows((trace.index, trace.td, trace.dt))
    return ("\n".join(head) + "\n" + body).encode("utf-8")


def load_trace(path) -> PhyTrace:
    with open(path, "rb") as fh:
        return parse_trace(fh)


def save_trace(trace: PhyTrace, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_trace(trace))


# ---------------------------------------------------------------------------
# synthetic channel
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GilbertElliottParams:
    p_good_to_bad: float
    p_bad_to_good: float
    erasure_prob_good: float = 0.0
    erasure_prob_bad: float = 1.0
    decode_latency: int = DEFAULT_DECODE_LATENCY
    seed: int = 0

    def __post_init__(self):
        for name in ("p_good_to_bad", "p_bad_to_good",
                     "erasure_prob_good", "erasure_prob_bad"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.decode_latency <= 0:
            raise ValueError("decode_latency must be positive")

    def stationary_erasure_rate(self) -> float:
        total = self.p_good_to_bad + self.p_bad_to_good
        bad = 0.0 if total == 0 else self.p_good_to_bad / total
        return (1 - bad) * self.erasure_prob_good + bad * self.erasure_prob_bad


def generate_trace(params: GilbertElliottParams, n_slots: int,
                   capacity: int, lldu_size: int) -> PhyTrace:
    """Back-to-back slots with erasures drawn from a two-state Markov chain.

    The chain starts in the good state. Two independent uniform streams drive
    the state transitions and the per-slot erasure draws, so the numba and
    numpy kernels see identical randomness.
    """
    if n_slots < 1:
        raise ValueError("n_slots must be >= 1")
    airtime = slot_duration_ns(lldu_size, capacity)
    if params.decode_latency < airtime:
        raise ValueError(
            f"decode_latency {params.decode_latency} ns is below the slot airtime {airtime} ns")
    rng = np.random.Generator(np.random.PCG64(params.seed & (2**64 - 1)))
    u_state = rng.random(n_slots)
    u_erase = rng.random(n_slots)
    states = kernels.ge_states(u_state, params.p_good_to_bad, params.p_bad_to_good)
    p_erase = np.where(states == 0, params.erasure_prob_good, params.erasure_prob_bad)
    erased = u_erase < p_erase
    td = np.arange(n_slots, dtype=np.int64) * airtime
    dt = np.where(erased, 0, params.decode_latency).astype(np.int64)
    meta = {
        "source": "gilbert-elliott",
        "p_good_to_bad": repr(params.p_good_to_bad),
        "p_bad_to_good": repr(params.p_bad_to_good),
        "erasure_prob_good": repr(params.erasure_prob_good),
        "erasure_prob_bad": repr(params.erasure_prob_bad),
        "seed": str(params.seed),
    }
    return PhyTrace(np.arange(n_slots, dtype=np.int64), td, dt, lldu_size, capacity, meta)


def erasure_bursts(trace: PhyTrace) -> dict[int, int]:
    """Histogram burst length -> number of bursts."""
    lengths = kernels.burst_lengths(trace.erased)
    if lengths.size == 0:
        return {}
    values, counts = np.unique(lengths, return_counts=True)
    return {int(v): int(c) for v, c in zip(values, counts)}
