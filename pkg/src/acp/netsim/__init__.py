"""Deterministic discrete-event simulator for FCFS queueing chains.

Virtual time is integer microseconds. Every stochastic element (update
arrivals, each server, each loss coin, each cross-traffic flow) draws from
its own named RNG stream derived from the run seed, so sweeps across rates
reuse common random numbers and repeated runs are bit-identical.
"""

from .engine import EventLoop
from .queues import (
    CrossFlowSpec,
    Delay,
    Deterministic,
    Exponential,
    LinkRate,
    NodeSpec,
    Topology,
)
from .run import (
    AcpController,
    FixedRateController,
    LazyController,
    NodeStats,
    Periodic,
    Poisson,
    ProfileResult,
    SimReport,
    SweepPoint,
    age_vs_lambda_sweep,
    optimal_backlog_profile,
    run,
    run_acp_in_sim,
    sweep_argmin,
)

__all__ = [
    "EventLoop",
    "Exponential",
    "Deterministic",
    "LinkRate",
    "Delay",
    "NodeSpec",
    "CrossFlowSpec",
    "Topology",
    "Poisson",
    "Periodic",
    "AcpController",
    "LazyController",
    "FixedRateController",
    "NodeStats",
    "SimReport",
    "SweepPoint",
    "ProfileResult",
    "run",
    "age_vs_lambda_sweep",
    "sweep_argmin",
    "run_acp_in_sim",
    "optimal_backlog_profile",
]
