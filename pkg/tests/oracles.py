"""Slow reference implementations used to cross-check the fast code.

They are written from the rules, one object per unit, with no attempt at
speed, and share nothing with the package beyond the input arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction


@dataclass
class Unit:
    td: int
    slot: int
    delivered: bool = False
    dt_prime: int = 0
    retx: int = 0
    through: int = 0
    drop_at: int = 0
    exhausted: bool = False
    cost: float = 1.0


def as_columns(units, slots_used):
    return {
        "td": [u.td for u in units],
        "dt_prime": [u.dt_prime for u in units],
        "delivered": [u.delivered for u in units],
        "retx_count": [u.retx for u in units],
        "slots_through": [u.through for u in units],
        "drop_at": [u.drop_at for u in units],
        "exhausted": [u.exhausted for u in units],
        "cost": [u.cost for u in units],
        "units_sent": slots_used,
    }


def split_block(remaining, n_d, n_r):
    if remaining >= n_d + n_r:
        return n_d, n_r
    d = math.ceil(Fraction(remaining * n_d, n_d + n_r))
    return d, remaining - d


def oracle_none(td, dt, det):
    units = []
    for s, (t, d) in enumerate(zip(td, dt)):
        u = Unit(t, s, through=s)
        if d:
            u.delivered, u.dt_prime = True, d
        else:
            u.drop_at = t + det
        units.append(u)
    return as_columns(units, len(td))


def oracle_fec(td, dt, n_d, n_r, det):
    units = []
    pos = 0
    S = len(td)
    while pos < S:
        d, q = split_block(S - pos, n_d, n_r)
        slots = list(range(pos, pos + d + q))
        got = [s for s in slots if dt[s]]
        lost = [s for s in slots if not dt[s]]
        recovered = len(lost) <= q
        if len(got) >= d:
            first_d = got[:d]
            rec = max(td[s] + dt[s] for s in first_d)
            rec_slot = first_d[-1]
        doom_slot = lost[q] if len(lost) > q else None
        for s in slots[:d]:
            u = Unit(td[s], s, cost=1.0 + q / d)
            if dt[s]:
                u.delivered, u.dt_prime, u.through = True, dt[s], s
            elif recovered:
                u.delivered, u.dt_prime, u.through = True, rec - td[s], rec_slot
            else:
                u.drop_at = max(td[s] + det, td[doom_slot] + det)
                u.through = max(s, doom_slot)
            units.append(u)
        pos += d + q
    return as_columns(units, S)


def oracle_sr_arq(td, dt, max_retx, feedback, det):
    units = []
    pending = []  # [ready, order, unit, last_seen]
    order = 0
    for s in range(len(td)):
        ready = [p for p in pending if p[0] <= td[s]]
        if ready:
            p = min(ready, key=lambda p: (p[0], p[1]))
            pending.remove(p)
            u = p[2]
            u.retx += 1
            u.through = s
            if dt[s]:
                u.delivered = True
                u.dt_prime = td[s] + dt[s] - u.td
            elif u.retx >= max_retx:
                u.drop_at = td[s] + det
            else:
                pending.append([td[s] + det + feedback, order, u, td[s] + det])
                order += 1
        else:
            u = Unit(td[s], s, through=s)
            units.append(u)
            if dt[s]:
                u.delivered, u.dt_prime = True, dt[s]
            elif max_retx == 0:
                u.drop_at = td[s] + det
            else:
                pending.append([td[s] + det + feedback, order, u, td[s] + det])
                order += 1
    for _, _, u, seen in pending:
        u.drop_at = seen
        u.exhausted = True
    for u in units:
        u.cost = 1.0 + u.retx
    return as_columns(units, len(td))


@dataclass
class Block:
    d: int
    q: int
    data: list = field(default_factory=list)
    sent: int = 0          # units of the first transmission put on the channel
    extra: int = 0         # repair units of any round
    results: list = field(default_factory=list)   # (slot, resolution, received)
    rounds: int = 0
    round_res: int = 0
    done: bool = False


def oracle_harq2(td, dt, n_d, n_r, per_round, max_rounds, feedback, det):
    S = len(td)
    units = []
    blocks = []
    pending = []  # [ready, order, block, left]
    order = 0
    cur = None
    for s in range(S):
        ready = [p for p in pending if p[0] <= td[s]]
        if ready:
            p = min(ready, key=lambda p: (p[0], p[1]))
            b = p[2]
            p[3] -= 1
            round_over = p[3] == 0
            if round_over:
                pending.remove(p)
            b.extra += 1
            rnd = b.rounds
            unit = None
        else:
            if cur is None or cur.sent == cur.d + cur.q:
                d, q = split_block(S - s, n_d, n_r)
                cur = Block(d, q)
                blocks.append(cur)
            b = cur
            rnd = 0
            if b.sent < b.d:
                unit = Unit(td[s], s, through=s)
                units.append(unit)
                b.data.append(unit)
            else:
                unit = None
                b.extra += 1
            b.sent += 1
            round_over = b.sent == b.d + b.q
        res = td[s] + (dt[s] if dt[s] else det)
        b.results.append((s, res, bool(dt[s])))
        b.round_res = max(b.round_res, res)
        if dt[s] and unit is not None:
            unit.delivered, unit.dt_prime = True, dt[s]
        received = [r for r in b.results if r[2]]
        if not b.done and len(received) == b.d:
            rec = max(r[1] for r in received)
            for u in b.data:
                if not u.delivered:
                    u.delivered, u.dt_prime, u.retx, u.through = True, rec - u.td, rnd, s
            b.done = True
        if round_over and not b.done:
            if b.rounds < max_rounds:
                b.rounds += 1
                pending.append([b.round_res + feedback, order, b, per_round])
                order += 1
                b.round_res = 0
            else:
                erased = [r for r in b.results if not r[2]]
                doom_slot, doom = erased[b.q + max_rounds * per_round][:2]
                for u in b.data:
                    if not u.delivered:
                        u.drop_at = max(u.td + det, doom)
                        u.retx = b.rounds
                        u.through = max(u.slot, doom_slot)
                b.done = True
    for b in blocks:
        if not b.done:
            last = max(r[1] for r in b.results)
            for u in b.data:
                if not u.delivered:
                    u.drop_at = max(u.td + det, last)
                    u.retx = b.rounds
                    u.exhausted = True
        for u in b.data:
            u.cost = 1.0 + b.extra / len(b.data)
    return as_columns(units, S)


# ---------------------------------------------------------------------------
# link queue
# ---------------------------------------------------------------------------


@dataclass
class QPacket:
    id: int
    te: int
    m: int
    et: int
    n: int = -1
    td: int = -1
    eff: int = -1
    fate: str = ""
    fate_at: int = -1

    @property
    def ready(self):
        return max(self.td, self.te)


def oracle_queue(arrivals, link, capacity, one_way):
    """Replay ``(id, te, size)`` arrivals against a link trace.

    Scheduling is found by scanning every candidate instant in increasing
    order and checking channel occupancy against all scheduled intervals.
    """
    td = [int(x) for x in link.td]
    resolved = [int(x) for x in link.resolved_at]
    delivered = [bool(x) for x in link.delivered]
    finish = [int(a) + int(b) for a, b in zip(link.td, link.dt_prime)]
    slot = int(link.slot_duration)
    packets = []
    admitted = []
    cursor = 0

    def busy(t):
        return any(p.eff <= t < p.eff + p.et for p in admitted if p.eff >= 0)

    def scan(limit):
        while True:
            cands = sorted({p.ready for p in admitted if p.eff < 0}
                           | {p.eff + p.et for p in admitted if p.eff >= 0})
            progressed = False
            for t in cands:
                if t > limit:
                    break
                if busy(t):
                    continue
                ready = [p for p in admitted if p.eff < 0 and p.ready <= t]
                if ready:
                    p = min(ready, key=lambda p: (p.ready, p.id))
                    p.eff = t
                    progressed = True
                    break
            if not progressed:
                return

    for pid, te, size in arrivals:
        scan(te)
        m = size // link.lldu_size + 1
        p = QPacket(pid, te, m, m * slot)
        packets.append(p)
        waiting = sum(1 for q in admitted if q.eff < 0 or q.eff > te)
        if waiting >= capacity:
            p.fate, p.fate_at = "qdrop", te
            continue
        lookup = 0
        for i, t in enumerate(td):
            if t <= te:
                lookup = i
        n = max(lookup, cursor) if td else 0
        if n + m > len(td):
            cursor = len(td)
            p.fate, p.fate_at = "exhausted", te
            continue
        cursor = n + m
        p.n = n
        p.td = max(resolved[n:n + m]) - p.et
        admitted.append(p)
    scan(float("inf"))
    for p in admitted:
        if all(delivered[p.n:p.n + p.m]):
            latest = max(finish[p.n:p.n + p.m])
            p.fate = "delivered"
            p.fate_at = max(latest + one_way, p.eff + p.et + one_way)
        else:
            p.fate, p.fate_at = "dropped", p.eff
    return packets


def oracle_engine_packets(arrivals, link, capacity, one_way, horizon):
    """``oracle_queue`` plus the engine's horizon rule: a packet whose
    departure falls after ``horizon`` is still in flight."""
    packets = oracle_queue(arrivals, link, capacity, one_way)
    for p in packets:
        if p.eff > horizon:
            p.eff, p.fate, p.fate_at = -1, "in_flight", -1
    return packets
