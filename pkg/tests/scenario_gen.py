"""Random small end-to-end scenarios shared by the oracle tests."""

import numpy as np

from xlayer.engine import SimConfig
from xlayer.link_queue import QueueConfig
from xlayer.reliability import ReliabilityScheme, apply_scheme
from xlayer.trace import GilbertElliottParams, PhyTrace, generate_trace
from xlayer.transport import TransportConfig

MS = 1_000_000
NS = 1_000_000_000


def random_scheme(rng, feedback):
    kind = int(rng.integers(0, 4))
    if kind == 0:
        return ReliabilityScheme.none()
    if kind == 1:
        return ReliabilityScheme.fec(int(rng.integers(1, 11)), int(rng.integers(1, 4)))
    if kind == 2:
        return ReliabilityScheme.sr_arq(int(rng.integers(0, 4)), feedback)
    return ReliabilityScheme.harq2(int(rng.integers(1, 11)), int(rng.integers(1, 4)),
                                   int(rng.integers(1, 3)), int(rng.integers(0, 4)), feedback)


def random_scenario(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(50, 1001))
    p = GilbertElliottParams(float(rng.uniform(0.005, 0.1)), float(rng.uniform(0.1, 0.5)),
                             float(rng.uniform(0, 0.05)), float(rng.uniform(0.3, 1.0)),
                             decode_latency=int(rng.integers(200_000, 20 * MS)), seed=seed)
    tr = generate_trace(p, n, 2_300_000, 33)
    dt = np.where(tr.dt == 0, 0, tr.dt + rng.integers(0, 10 * MS, n))
    tr = PhyTrace.from_arrays(tr.td, dt, 33, 2_300_000)
    one_way = int(rng.integers(0, 100 * MS))
    link = apply_scheme(tr, random_scheme(rng, int(rng.integers(0, 50 * MS))))
    transport = TransportConfig(segment_size=int(rng.choice([40, 100, 200, 500])),
                                initial_cwnd=int(rng.integers(1, 5)),
                                total_segments=int(rng.integers(1, 70)))
    queue = QueueConfig(int(rng.integers(1, 20)), one_way)
    return SimConfig(link, queue, transport, duration=int(rng.integers(1, 15)) * NS)
