import numpy as np
import pytest

from xlayer import _accel, kernels
from xlayer.trace import (GilbertElliottParams, PhyTrace, TraceError, erasure_bursts,
                          generate_trace, parse_trace, slot_duration_ns, write_trace)


def _doc(rows, header="#capacity_bps=2300000 lldu_size_bytes=33"):
    body = "\n".join(" ".join(str(x) for x in r) for r in rows)
    return f"#clift-trace v1\n{header}\n{body}\n".encode()


def test_slot_duration_for_33_bytes_at_2_3_mbps():
    # 33 * 8 / 2.3e6 s = 114782.6 ns
    assert slot_duration_ns(33, 2_300_000) == 114_783


def test_slot_duration_ties_round_to_even():
    assert slot_duration_ns(1, 16_000_000_000 // 5) == 2     # 2.5 -> 2
    assert slot_duration_ns(7, 16_000_000_000) == 4          # 3.5 -> 4


def test_parse_two_slot_file():
    tr = parse_trace(_doc([(0, 0, 500000), (1, 114782, 500000)]))
    assert len(tr) == 2
    assert tr.slot_duration == 114_783
    assert tr.td.tolist() == [0, 114782]
    assert not tr.erased.any()


def test_decreasing_td_reports_offending_line():
    with pytest.raises(TraceError, match="line 5"):
        parse_trace(_doc([(0, 0, 500000), (1, 200000, 500000), (2, 100000, 500000)]))


def test_erasure_row_passes_through():
    tr = parse_trace(_doc([(0, 0, 500000), (1, 114783, 0), (2, 229566, 500000)]))
    assert tr.erased.tolist() == [False, True, False]


@pytest.mark.parametrize("rows, msg", [
    ([(0, 0, -1)], "negative dt"),
    ([(0, 0, 10)], "shorter than slot airtime"),
    ([(0, 0, 500000), (0, 114783, 500000)], "index not increasing"),
    ([(0, 0, "x")], "non-integer"),
    ([(0, 0)], "expected 3 columns"),
])
def test_invalid_rows(rows, msg):
    with pytest.raises(TraceError, match=msg):
        parse_trace(_doc(rows))


def test_bad_headers():
    with pytest.raises(TraceError, match="line 1"):
        parse_trace(b"#nope\n")
    with pytest.raises(TraceError, match="capacity_bps"):
        parse_trace(_doc([(0, 0, 500000)], header="#lldu_size_bytes=33"))
    with pytest.raises(TraceError, match="no slots"):
        parse_trace(b"#clift-trace v1\n#capacity_bps=1 lldu_size_bytes=1\n")
    with pytest.raises(TraceError, match="empty"):
        parse_trace(b"")


def test_round_trip_with_meta():
    tr = generate_trace(GilbertElliottParams(0.05, 0.3, 0.01, 0.7, seed=3), 500,
                        2_300_000, 33)
    data = write_trace(tr)
    back = parse_trace(data)
    assert back == tr
    assert write_trace(back) == data


def test_single_slot_writes_one_row():
    tr = PhyTrace.from_arrays([0], [35_500_000], 33, 2_300_000)
    lines = write_trace(tr).decode().splitlines()
    assert lines[0] == "#clift-trace v1"
    assert lines[-1] == "0 0 35500000"
    assert sum(1 for ln in lines if not ln.startswith("#")) == 1


def test_empty_trace_cannot_be_built():
    with pytest.raises(TraceError):
        PhyTrace.from_arrays([], [], 33, 2_300_000)


def test_generator_perfect_and_dead_channels():
    ok = generate_trace(GilbertElliottParams(0.3, 0.3, 0.0, 0.0, seed=1), 2000, 2_300_000, 33)
    assert not ok.erased.any()
    dead = generate_trace(GilbertElliottParams(0.3, 0.3, 1.0, 1.0, seed=1), 2000, 2_300_000, 33)
    assert dead.erased.all()


def test_generator_is_deterministic_and_back_to_back():
    p = GilbertElliottParams(0.01, 0.2, 0.0, 0.5, seed=42)
    a = generate_trace(p, 10_000, 2_300_000, 33)
    b = generate_trace(p, 10_000, 2_300_000, 33)
    assert write_trace(a) == write_trace(b)
    assert (np.diff(a.td) == a.slot_duration).all()


def test_stationary_erasure_rate():
    p = GilbertElliottParams(0.01, 0.2, 0.0, 0.5, seed=2024)
    expected = 0.01 / 0.21 * 0.5
    assert p.stationary_erasure_rate() == pytest.approx(expected)
    assert expected == pytest.approx(0.0238, abs=5e-5)
    tr = generate_trace(p, 1_000_000, 2_300_000, 33)
    assert abs(tr.erased.mean() - expected) <= 0.005


def test_generator_rejects_bad_params():
    with pytest.raises(ValueError):
        GilbertElliottParams(1.5, 0.1)
    with pytest.raises(ValueError):
        generate_trace(GilbertElliottParams(0.1, 0.1, decode_latency=10), 5, 2_300_000, 33)


def test_backends_generate_identical_traces():
    p = GilbertElliottParams(0.02, 0.1, 0.01, 0.6, seed=9)
    old = _accel.backend()
    try:
        _accel.set_backend("numba")
        a = write_trace(generate_trace(p, 100_000, 2_300_000, 33))
        _accel.set_backend("numpy")
        b = write_trace(generate_trace(p, 100_000, 2_300_000, 33))
    finally:
        _accel.set_backend(old)
    assert a == b


def test_burst_histogram(backend):
    tr = PhyTrace.from_arrays(np.arange(9) * 1000, [0, 0, 5000, 0, 5000, 5000, 0, 0, 0],
                              1, 8_000_000)
    assert erasure_bursts(tr) == {1: 1, 2: 1, 3: 1}


def test_burst_kernels_agree_on_edges():
    for pattern in ([], [True], [False], [True, True], [False, True, False, True]):
        arr = np.array(pattern, dtype=bool)
        assert (kernels._burst_lengths_loop(arr).tolist()
                == kernels._burst_lengths_numpy(arr).tolist())
