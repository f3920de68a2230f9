import numpy as np
import pytest

from xlayer.engine import (ACK_ARRIVAL, APP_SEND, LINK_DELIVERY, LINK_DEPARTURE, PACKET_ARRIVAL,
                           EventQueue, SimConfig, Simulation, SimulationError, run)
from xlayer.link_queue import DELIVERED, IN_FLIGHT, QueueConfig
from xlayer.reliability import apply_scheme, parse_scheme
from xlayer.trace import GilbertElliottParams, generate_trace
from xlayer.transport import TransportConfig

from .conftest import MS, make_link

NS = 1_000_000_000


def test_event_queue_orders_by_time_then_insertion():
    q = EventQueue()
    q.schedule(5, "b")
    q.schedule(1, "a")
    h = q.schedule(5, "c")
    q.schedule(5, "d")
    q.cancel(h)
    assert [q.pop().kind for _ in range(3)] == ["a", "b", "d"]
    assert q.pop() is None
    with pytest.raises(SimulationError):
        q.schedule(1, "late")


def test_empty_link_gives_empty_logs():
    link = make_link([], [])
    res = run(SimConfig(link, duration=NS))
    assert res.packets == [] and res.transport == []
    assert res.events_executed == 0


def test_two_packet_timeline():
    link = make_link([0, 1, 2, 3], [0.5] * 4, slot=MS // 10)
    cfg = SimConfig(link, QueueConfig(10, 10 * MS),
                    TransportConfig(segment_size=50, total_segments=2), duration=NS)
    seen = []
    res = Simulation(cfg, trace_hook=lambda ev: seen.append((ev.time, ev.kind))).run()
    a, b = res.packets
    assert (a.n, a.td, a.eff_departure, a.fate_at) == (0, 400_000, 400_000, 10_500_000)
    assert (b.n, b.td, b.eff_departure, b.fate_at) == (1, 1_400_000, 1_400_000, 11_500_000)
    assert seen == [
        (0, APP_SEND), (0, PACKET_ARRIVAL), (0, PACKET_ARRIVAL),
        (400_000, LINK_DEPARTURE), (1_400_000, LINK_DEPARTURE),
        (10_500_000, LINK_DELIVERY), (11_500_000, LINK_DELIVERY),
        (20_500_000, ACK_ARRIVAL), (21_500_000, ACK_ARRIVAL),
    ]
    assert res.sender.snd_una == 2 and res.sender.srtt == (7 * 20_500_000 + 21_500_000) // 8


def lossy_config(seed, scheme="sr-arq:3", duration=20 * NS, **queue):
    tr = generate_trace(GilbertElliottParams(0.002, 0.05, 0.003, 0.5, seed=seed),
                        duration // 114_783 + 2000, 2_300_000, 33)
    link = apply_scheme(tr, parse_scheme(scheme, feedback_delay=50 * MS))
    return SimConfig(link, QueueConfig(queue.get("cap", 50), 50 * MS), TransportConfig(),
                     duration)


def test_runs_are_deterministic():
    a = run(lossy_config(1))
    b = run(lossy_config(1))
    assert [p.row() for p in a.packets] == [p.row() for p in b.packets]
    assert [e.row() for e in a.transport] == [e.row() for e in b.transport]


@pytest.mark.parametrize("scheme", ["none", "fec:10,12", "sr-arq:3", "harq2:10,12"])
def test_run_invariants(scheme):
    cfg = lossy_config(3, scheme)
    res = run(cfg)
    one_way = cfg.queue.one_way_propagation
    occupied = sorted((p.eff_departure, p.eff_departure + p.et)
                      for p in res.packets if p.eff_departure >= 0)
    assert all(a[1] <= b[0] for a, b in zip(occupied, occupied[1:]))
    for p in res.packets:
        if p.fate == DELIVERED:
            assert p.fate_at >= p.te + p.et + one_way
        if p.eff_departure >= 0:
            assert p.eff_departure >= p.te and p.eff_departure >= p.td
    cw = [e.value for e in res.transport if e.event == "cwnd"]
    assert max(cw) <= 64
    assert res.sender.karn_violations == 0
    claimed = [p for p in res.packets if p.n >= 0]
    lldus = np.concatenate([np.arange(p.n, p.n + p.m) for p in claimed])
    assert len(np.unique(lldus)) == len(lldus)


def test_horizon_leaves_packets_in_flight():
    res = run(lossy_config(2, "none", duration=2 * NS))
    fates = {p.fate for p in res.packets}
    assert IN_FLIGHT in fates or all(p.eff_departure <= 2 * NS for p in res.packets)
    for p in res.packets:
        if p.fate == IN_FLIGHT:
            assert p.eff_departure == -1


def test_perfect_channel_short_run():
    tr = generate_trace(GilbertElliottParams(0, 1, 0, 0), 200_000, 2_300_000, 33)
    link = apply_scheme(tr, parse_scheme("none"))
    res = run(SimConfig(link, QueueConfig(100, 285 * MS), TransportConfig(), 20 * NS))
    assert res.sender.rto_events == 0
    assert not any(e.event == "retx" for e in res.transport)
    assert res.sender.cwnd == 64.0


@pytest.mark.parametrize("seed", range(40))
def test_engine_matches_queue_oracle(seed):
    from .oracles import oracle_engine_packets
    from .scenario_gen import random_scenario
    cfg = random_scenario(seed)
    res = run(cfg)
    arrivals = [(p.id, p.te, p.size) for p in res.packets]
    ref = oracle_engine_packets(arrivals, cfg.link, cfg.queue.capacity_packets,
                                cfg.queue.one_way_propagation, cfg.duration)
    got = [(p.id, p.n, p.td, p.eff_departure, p.fate, p.fate_at) for p in res.packets]
    want = [(p.id, p.n, p.td, p.eff, p.fate, p.fate_at) for p in ref]
    assert got == want
