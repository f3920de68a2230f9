"""Trace-driven simulation of link-layer reliability schemes under a TCP flow."""

from .engine import SimConfig, SimResult, Simulation, run
from .link_queue import IpPacketRecord, LinkQueue, QueueConfig
from .metrics import MetricsReport, compute_report, emit_timeseries
from .reliability import (LinkTrace, ReliabilityScheme, apply_scheme, link_layer_stats,
                          parse_linktrace, parse_scheme, transform_fec, transform_harq2,
                          transform_none, transform_sr_arq, write_linktrace)
from .scenario import Scenario, load_scenario, parse_scenario
from .trace import (GilbertElliottParams, PhyTrace, TraceError, generate_trace,
                    load_trace, parse_trace, save_trace, write_trace)
from .transport import NewRenoSack, Receiver, TransportConfig

__version__ = "0.1.0"
