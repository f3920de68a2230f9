"""Time the slot kernels under the numba and pure-numpy backends.

    python benchmarks/bench_kernels.py --slots 1000000 --repeat 3

Both backends run on the same inputs and the outputs are compared, so the
timings are only printed for results that agree bit for bit.
"""

import argparse
import time

import numpy as np

from xlayer import _accel, kernels
from xlayer.trace import GilbertElliottParams, generate_trace

MS = 1_000_000


def cases(n, loop_n):
    tr = generate_trace(GilbertElliottParams(1e-4, 0.02, 0.003, 0.3, 35_500_000, seed=1),
                        n, 2_300_000, 33)
    short = slice(0, loop_n)
    td, dt = tr.td, tr.dt
    u = np.random.default_rng(1).random(n)
    det, fb = 35_500_000, 285 * MS
    return [
        ("ge_states", n, lambda: kernels.ge_states(u, 1e-4, 0.02)),
        ("burst_lengths", n, lambda: kernels.burst_lengths(dt == 0)),
        ("fec 10,2", n, lambda: kernels.fec(td, dt, 10, 2, det)),
        ("sr_arq 3", loop_n, lambda: kernels.sr_arq(td[short], dt[short], 3, fb, det)),
        ("harq2 10,2", loop_n,
         lambda: kernels.harq2(td[short], dt[short], 10, 2, 2, 3, fb, det)),
    ]


def same(a, b):
    if isinstance(a, tuple):
        return len(a) == len(b) and all(same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.array_equal(a, b)
    return a == b


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--slots", type=int, default=1_000_000)
    ap.add_argument("--loop-slots", type=int, default=100_000,
                    help="slots for the kernels whose numpy path is an interpreted loop")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    old = _accel.backend()
    print(f"{'kernel':<14} {'slots':>9} {'numba s':>9} {'numpy s':>9} {'speedup':>8}")
    try:
        for name, n, fn in cases(args.slots, args.loop_slots):
            _accel.set_backend("numba")
            fn()   # compile
            t_nb, out_nb = best_of(fn, args.repeat)
            _accel.set_backend("numpy")
            t_np, out_np = best_of(fn, args.repeat)
            if not same(out_nb, out_np):
                raise SystemExit(f"{name}: backends disagree")
            print(f"{name:<14} {n:>9} {t_nb:>9.4f} {t_np:>9.4f} {t_np / t_nb:>7.1f}x")
    finally:
        _accel.set_backend(old)


if __name__ == "__main__":
    main()
