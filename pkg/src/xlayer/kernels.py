"""Hot inner loops over slot arrays.

Every kernel has a loop form (compiled by numba, or run as plain Python) and,
where the recurrence allows it, a vectorised numpy form. The public wrappers
at the bottom pick one according to :mod:`xlayer._accel`.

All times are int64 nanoseconds. A decode latency of 0 marks an erased slot.
"""

import numpy as np

from . import _accel
from ._accel import njit

# ---------------------------------------------------------------------------
# Gilbert-Elliott state chain
# ---------------------------------------------------------------------------


@njit
def _ge_states_loop(u, p_gb, p_bg):
    n = u.shape[0]
    states = np.empty(n, np.int8)
    cur = 0
    for i in range(n):
        states[i] = cur
        if cur == 0:
            if u[i] < p_gb:
                cur = 1
        elif u[i] < p_bg:
            cur = 0
    return states


def _ge_states_numpy(u, p_gb, p_bg):
    # Step i maps state s[i] to s[i+1]. From "good" the next state is
    # u < p_gb, from "bad" it is u >= p_bg. Where both agree the step resets
    # the chain; otherwise it either keeps or flips the state, so between
    # resets the state is a running parity of flips.
    n = u.shape[0]
    if n == 0:
        return np.empty(0, np.int8)
    nxt_good = u < p_gb
    nxt_bad = u >= p_bg
    reset = nxt_good == nxt_bad
    flip = nxt_good & ~nxt_bad
    flips = np.cumsum(flip, dtype=np.int64)
    last = np.where(reset, np.arange(n), -1)
    np.maximum.accumulate(last, out=last)
    has = last >= 0
    safe = np.where(has, last, 0)
    base = np.where(has, nxt_good[safe], False).astype(np.int64)
    ref = np.where(has, flips[safe], 0)
    nxt = base ^ ((flips - ref) & 1)
    states = np.empty(n, np.int8)
    states[0] = 0
    states[1:] = nxt[:-1]
    return states


# ---------------------------------------------------------------------------
# Erasure burst lengths
# ---------------------------------------------------------------------------


@njit
def _burst_lengths_loop(erased):
    n = erased.shape[0]
    out = np.empty(n, np.int64)
    k = 0
    run = 0
    for i in range(n):
        if erased[i]:
            run += 1
        elif run > 0:
            out[k] = run
            k += 1
            run = 0
    if run > 0:
        out[k] = run
        k += 1
    return out[:k].copy()


def _burst_lengths_numpy(erased):
    padded = np.concatenate(([0], erased.astype(np.int8), [0]))
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return (ends - starts).astype(np.int64)


# ---------------------------------------------------------------------------
# Block geometry shared by FEC and HARQ-II
# ---------------------------------------------------------------------------


@njit
def block_shape(remaining, n_d, n_r):
    """Data/repair split of a block starting with ``remaining`` slots left.

    A truncated final block keeps the code rate as closely as possible,
    rounding the data share up so at least one data unit survives.
    """
    if remaining >= n_d + n_r:
        return n_d, n_r
    d = (remaining * n_d + n_d + n_r - 1) // (n_d + n_r)
    return d, remaining - d


# Outcome arrays, in order: td, dt_prime, delivered, retx, through, drop_at,
# exhausted, cost. ``cost`` is the channel units charged to the data unit.


def _empty_outcomes(n):
    return (
        np.zeros(n, np.int64),
        np.zeros(n, np.int64),
        np.zeros(n, np.bool_),
        np.zeros(n, np.int64),
        np.zeros(n, np.int64),
        np.zeros(n, np.int64),
        np.zeros(n, np.bool_),
        np.ones(n, np.float64),
    )


# ---------------------------------------------------------------------------
# No link-layer scheme
# ---------------------------------------------------------------------------


def transform_none_arrays(td, dt, detection):
    n = td.shape[0]
    out = _empty_outcomes(n)
    o_td, o_dtp, o_del, _, o_thr, o_drop, _, _ = out
    o_td[:] = td
    o_del[:] = dt != 0
    o_dtp[:] = dt
    o_thr[:] = np.arange(n)
    o_drop[:] = np.where(o_del, 0, td + detection)
    return out, n


# ---------------------------------------------------------------------------
# FEC
# ---------------------------------------------------------------------------


@njit
def _fec_loop(td, dt, n_d, n_r, detection):
    S = td.shape[0]
    o_td = np.zeros(S, np.int64)
    o_dtp = np.zeros(S, np.int64)
    o_del = np.zeros(S, np.bool_)
    o_retx = np.zeros(S, np.int64)
    o_thr = np.zeros(S, np.int64)
    o_drop = np.zeros(S, np.int64)
    o_exh = np.zeros(S, np.bool_)
    o_cost = np.ones(S, np.float64)
    pos = 0
    k = 0
    while pos < S:
        d, q = block_shape(S - pos, n_d, n_r)
        end = pos + d + q
        received = 0
        erasures = 0
        rec = np.int64(0)
        rec_slot = end - 1
        doom = np.int64(0)
        doom_slot = pos
        for s in range(pos, end):
            if dt[s] != 0:
                received += 1
                if received <= d:
                    fin = td[s] + dt[s]
                    if fin > rec:
                        rec = fin
                    if received == d:
                        rec_slot = s
            else:
                erasures += 1
                if erasures == q + 1:
                    doom = td[s] + detection
                    doom_slot = s
        ok = erasures <= q
        cost = 1.0 + q / d
        for j in range(d):
            s = pos + j
            o_td[k] = td[s]
            o_cost[k] = cost
            if dt[s] != 0:
                o_del[k] = True
                o_dtp[k] = dt[s]
                o_thr[k] = s
            elif ok:
                o_del[k] = True
                o_dtp[k] = rec - td[s]
                o_thr[k] = rec_slot
            else:
                own = td[s] + detection
                o_drop[k] = own if own > doom else doom
                o_thr[k] = s if s > doom_slot else doom_slot
            k += 1
        pos = end
    return (o_td[:k], o_dtp[:k], o_del[:k], o_retx[:k], o_thr[:k], o_drop[:k],
            o_exh[:k], o_cost[:k]), pos


def _fec_block_rows(td2, dt2, d, q, detection, first_slot):
    """Vectorised FEC over a (blocks, d+q) matrix of equally shaped blocks."""
    nb, width = td2.shape
    got = dt2 != 0
    erased = ~got
    n_erased = erased.sum(axis=1)
    ok = n_erased <= q
    rank = np.cumsum(got, axis=1)
    useful = got & (rank <= d)
    fin = np.where(useful, td2 + dt2, np.iinfo(np.int64).min)
    rec = fin.max(axis=1)
    col = np.arange(width)
    # slot completing recovery: the d-th received unit
    completing = got & (rank == d)
    rec_col = np.where(completing.any(axis=1), np.argmax(completing, axis=1), width - 1)
    erank = np.cumsum(erased, axis=1)
    doom_hit = erased & (erank == q + 1)
    doom = np.where(doom_hit, td2 + detection, 0).max(axis=1)
    doom_col = np.argmax(doom_hit, axis=1)

    base = first_slot + np.arange(nb)[:, None] * width
    dtd = td2[:, :d]
    ddt = dt2[:, :d]
    dgot = got[:, :d]
    okb = np.broadcast_to(ok[:, None], dgot.shape)
    delivered = dgot | okb
    dtp = np.where(dgot, ddt, np.where(okb, rec[:, None] - dtd, 0))
    drop_col = np.maximum(col[None, :d], doom_col[:, None])
    thr_col = np.where(dgot, col[None, :d], np.where(okb, rec_col[:, None], drop_col))
    own = dtd + detection
    drop = np.where(delivered, 0, np.maximum(own, doom[:, None]))
    n = nb * d
    return (
        dtd.reshape(n),
        dtp.reshape(n),
        delivered.reshape(n),
        np.zeros(n, np.int64),
        (base + thr_col).reshape(n),
        drop.reshape(n),
        np.zeros(n, np.bool_),
        np.full(n, 1.0 + q / d),
    )


def _fec_numpy(td, dt, n_d, n_r, detection):
    S = td.shape[0]
    width = n_d + n_r
    full = S // width
    parts = []
    if full:
        cut = full * width
        parts.append(_fec_block_rows(td[:cut].reshape(full, width),
                                     dt[:cut].reshape(full, width),
                                     n_d, n_r, detection, 0))
    rest = S - full * width
    if rest:
        d, q = block_shape(rest, n_d, n_r)
        start = full * width
        parts.append(_fec_block_rows(td[start:].reshape(1, rest),
                                     dt[start:].reshape(1, rest),
                                     d, q, detection, start))
    if not parts:
        return _empty_outcomes(0), 0
    return tuple(np.concatenate(cols) for cols in zip(*parts)), S


# ---------------------------------------------------------------------------
# SR-ARQ
# ---------------------------------------------------------------------------


@njit
def _sr_arq_loop(td, dt, max_retx, feedback, detection):
    S = td.shape[0]
    o_td = np.zeros(S, np.int64)
    o_dtp = np.zeros(S, np.int64)
    o_del = np.zeros(S, np.bool_)
    o_retx = np.zeros(S, np.int64)
    o_thr = np.zeros(S, np.int64)
    o_drop = np.zeros(S, np.int64)
    o_exh = np.zeros(S, np.bool_)
    o_cost = np.ones(S, np.float64)
    # NACK arrivals are pushed in slot order with constant offsets, so the
    # pending list is already sorted by ready instant.
    q_idx = np.empty(S, np.int64)
    q_ready = np.empty(S, np.int64)
    head = 0
    tail = 0
    k = 0
    for s in range(S):
        if head < tail and q_ready[head] <= td[s]:
            j = q_idx[head]
            head += 1
            o_retx[j] += 1
            o_thr[j] = s
            if dt[s] != 0:
                o_del[j] = True
                o_dtp[j] = td[s] + dt[s] - o_td[j]
            else:
                seen = td[s] + detection
                if o_retx[j] >= max_retx:
                    o_drop[j] = seen
                else:
                    q_idx[tail] = j
                    q_ready[tail] = seen + feedback
                    tail += 1
        else:
            j = k
            k += 1
            o_td[j] = td[s]
            o_thr[j] = s
            if dt[s] != 0:
                o_del[j] = True
                o_dtp[j] = dt[s]
            else:
                seen = td[s] + detection
                if max_retx == 0:
                    o_drop[j] = seen
                else:
                    q_idx[tail] = j
                    q_ready[tail] = seen + feedback
                    tail += 1
    for i in range(head, tail):
        j = q_idx[i]
        o_drop[j] = q_ready[i] - feedback
        o_exh[j] = True
    for j in range(k):
        o_cost[j] = 1.0 + o_retx[j]
    return (o_td[:k], o_dtp[:k], o_del[:k], o_retx[:k], o_thr[:k], o_drop[:k],
            o_exh[:k], o_cost[:k]), S


# ---------------------------------------------------------------------------
# HARQ type II
# ---------------------------------------------------------------------------


@njit
def _harq2_loop(td, dt, n_d, n_r, per_round, max_rounds, feedback, detection):
    S = td.shape[0]
    o_td = np.zeros(S, np.int64)
    o_dtp = np.zeros(S, np.int64)
    o_del = np.zeros(S, np.bool_)
    o_retx = np.zeros(S, np.int64)
    o_thr = np.zeros(S, np.int64)
    o_drop = np.zeros(S, np.int64)
    o_exh = np.zeros(S, np.bool_)
    o_cost = np.ones(S, np.float64)

    nb_max = S + 1
    b_first = np.zeros(nb_max, np.int64)      # first data index
    b_d = np.zeros(nb_max, np.int64)
    b_q = np.zeros(nb_max, np.int64)
    b_sent_data = np.zeros(nb_max, np.int64)
    b_sent_extra = np.zeros(nb_max, np.int64)
    b_recv = np.zeros(nb_max, np.int64)
    b_erasures = np.zeros(nb_max, np.int64)
    b_runmax = np.zeros(nb_max, np.int64)
    b_round = np.zeros(nb_max, np.int64)      # feedback rounds started
    b_round_res = np.zeros(nb_max, np.int64)  # latest resolution in current round
    b_last_res = np.zeros(nb_max, np.int64)
    b_doom = np.zeros(nb_max, np.int64)
    b_doom_slot = np.zeros(nb_max, np.int64)
    b_done = np.zeros(nb_max, np.bool_)

    # pending feedback rounds: block, ready instant, units left
    p_block = np.empty(nb_max, np.int64)
    p_ready = np.empty(nb_max, np.int64)
    p_left = np.empty(nb_max, np.int64)
    n_pending = 0

    nb = 0
    cur = -1
    cur_pos = 0
    k = 0
    for s in range(S):
        pick = -1
        for i in range(n_pending):
            if p_ready[i] <= td[s] and (pick < 0 or p_ready[i] < p_ready[pick]):
                pick = i
        if pick >= 0:
            b = p_block[pick]
            rnd = b_round[b]
            p_left[pick] -= 1
            round_over = p_left[pick] == 0
            if round_over:
                for i in range(pick, n_pending - 1):
                    p_block[i] = p_block[i + 1]
                    p_ready[i] = p_ready[i + 1]
                    p_left[i] = p_left[i + 1]
                n_pending -= 1
            b_sent_extra[b] += 1
            is_data = False
            j = -1
        else:
            if cur < 0 or cur_pos == b_d[cur] + b_q[cur]:
                cur = nb
                nb += 1
                d, q = block_shape(S - s, n_d, n_r)
                b_first[cur] = k
                b_d[cur] = d
                b_q[cur] = q
                cur_pos = 0
            b = cur
            rnd = 0
            is_data = cur_pos < b_d[b]
            if is_data:
                j = k
                k += 1
                o_td[j] = td[s]
                o_thr[j] = s
                b_sent_data[b] += 1
            else:
                j = -1
                b_sent_extra[b] += 1
            cur_pos += 1
            round_over = cur_pos == b_d[b] + b_q[b]

        # channel outcome of this unit
        if dt[s] != 0:
            res = td[s] + dt[s]
            if is_data:
                o_del[j] = True
                o_dtp[j] = dt[s]
            if not b_done[b]:
                b_recv[b] += 1
                if res > b_runmax[b]:
                    b_runmax[b] = res
                if b_recv[b] == b_d[b]:
                    rec = b_runmax[b]
                    for jj in range(b_first[b], b_first[b] + b_sent_data[b]):
                        if not o_del[jj]:
                            o_del[jj] = True
                            o_dtp[jj] = rec - o_td[jj]
                            o_retx[jj] = rnd
                            o_thr[jj] = s
                    b_done[b] = True
        else:
            res = td[s] + detection
            b_erasures[b] += 1
            if b_erasures[b] == b_q[b] + max_rounds * per_round + 1:
                b_doom[b] = res
                b_doom_slot[b] = s
        if res > b_round_res[b]:
            b_round_res[b] = res
        if res > b_last_res[b]:
            b_last_res[b] = res

        if round_over and not b_done[b]:
            if b_round[b] < max_rounds:
                b_round[b] += 1
                p_block[n_pending] = b
                p_ready[n_pending] = b_round_res[b] + feedback
                p_left[n_pending] = per_round
                n_pending += 1
                b_round_res[b] = 0
            else:
                for jj in range(b_first[b], b_first[b] + b_sent_data[b]):
                    if not o_del[jj]:
                        own = o_td[jj] + detection
                        o_drop[jj] = own if own > b_doom[b] else b_doom[b]
                        o_retx[jj] = b_round[b]
                        if b_doom_slot[b] > o_thr[jj]:
                            o_thr[jj] = b_doom_slot[b]
                b_done[b] = True

    for b in range(nb):
        if not b_done[b]:
            for jj in range(b_first[b], b_first[b] + b_sent_data[b]):
                if not o_del[jj]:
                    own = o_td[jj] + detection
                    lr = b_last_res[b]
                    o_drop[jj] = own if own > lr else lr
                    o_retx[jj] = b_round[b]
                    o_exh[jj] = True
        share = 1.0 + b_sent_extra[b] / b_sent_data[b]
        for jj in range(b_first[b], b_first[b] + b_sent_data[b]):
            o_cost[jj] = share
    return (o_td[:k], o_dtp[:k], o_del[:k], o_retx[:k], o_thr[:k], o_drop[:k],
            o_exh[:k], o_cost[:k]), S


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def _loop(fn):
    return fn if _accel.use_numba() else fn.py_func


def ge_states(u, p_gb, p_bg):
    if _accel.use_numba():
        return _ge_states_loop(u, p_gb, p_bg)
    return _ge_states_numpy(u, p_gb, p_bg)


def burst_lengths(erased):
    erased = np.ascontiguousarray(erased, dtype=np.bool_)
    if _accel.use_numba():
        return _burst_lengths_loop(erased)
    return _burst_lengths_numpy(erased)


def fec(td, dt, n_d, n_r, detection):
    if _accel.use_numba():
        return _fec_loop(td, dt, n_d, n_r, detection)
    return _fec_numpy(td, dt, n_d, n_r, detection)


def sr_arq(td, dt, max_retx, feedback, detection):
    return _loop(_sr_arq_loop)(td, dt, max_retx, feedback, detection)


def harq2(td, dt, n_d, n_r, per_round, max_rounds, feedback, detection):
    return _loop(_harq2_loop)(td, dt, n_d, n_r, per_round, max_rounds,
                              feedback, detection)
