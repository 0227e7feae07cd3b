"""Simulation entry points.

Two modes share one network fabric:

* run(): open-loop update generation (Poisson or periodic) pushed through
  the forward chain to a monitor sink. No ACKs, no controller; this is the
  mode for age-versus-rate sweeps and queueing-theory comparisons.
* run_acp_in_sim(): hosts the real protocol endpoints on the virtual
  clock. Updates travel the forward chain, ACKs the reverse chain (or
  return instantly when the topology has no reverse nodes), and the source
  adapts its rate exactly as it would over real sockets.

Statistics exclude a warmup prefix (default 10% of the run); packet
conservation counters cover the whole run.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from ..control import ControlConfig
from ..endpoint import (
    DecisionRow,
    EpochClosed,
    InitComplete,
    MonitorEndpoint,
    SendUpdate,
    SourceConfig,
    SourceEndpoint,
    Stalled,
)
from ..errors import InstabilityError
from ..wire import HEADER_LEN, AckHeader, UpdateHeader
from .engine import EventLoop
from .queues import K_ACK, K_CROSS, K_UPDATE, Packet, Topology, build_node
from .stats import AgeIntegral, TimeAverage

US_PER_S = 1_000_000


@dataclass(frozen=True)
class Poisson:
    rate: float  # updates per second


@dataclass(frozen=True)
class Periodic:
    rate: float


@dataclass(frozen=True)
class AcpController:
    kappa: float = 0.25
    alpha: float = 0.125
    epoch_multiplier: float = 10
    lambda_min: float = 0.1
    lambda_max: float = 1e4
    guard_uses_realized_change: bool = False


@dataclass(frozen=True)
class LazyController:
    alpha: float = 0.125
    lambda_min: float = 0.1
    lambda_max: float = 1e4


@dataclass(frozen=True)
class FixedRateController:
    rate: float
    alpha: float = 0.125


@dataclass(frozen=True)
class NodeStats:
    avg_backlog: float  # update packets, time average after warmup
    departures: int  # update departures after warmup
    mean_sojourn_s: float | None
    update_drops: int  # whole-run losses on this node's outgoing hop
    occupancy_end: int  # updates still inside at the end


@dataclass(frozen=True)
class SimReport:
    duration_s: float
    warmup_s: float
    time_avg_age: float  # monitor-side, true shared-clock age
    source_est_age: float | None
    source_avg_backlog: float | None  # sent-but-unacked, source's view
    forward_nodes: tuple
    reverse_nodes: tuple
    mean_rtt: float | None
    mean_system_time: float | None
    updates_generated: int
    updates_delivered: int
    updates_dropped: int
    monitor_discards: int
    in_flight_at_end: int
    achieved_lambda: float
    controller: str
    final_rate: float | None
    stalled: bool
    decisions: tuple = ()

    @property
    def total_avg_backlog(self) -> float:
        return sum(n.avg_backlog for n in self.forward_nodes)


class _Network:
    """Forward/reverse chains, cross traffic, and shared statistics."""

    def __init__(self, topology: Topology, seed, duration_s, warmup_frac,
                 max_backlog, trace=None):
        if duration_s <= 0:
            raise ValueError(f"duration must be positive, got {duration_s}")
        if not 0.0 <= warmup_frac < 1.0:
            raise ValueError(f"warmup_frac must be in [0, 1), got {warmup_frac}")
        self.topology = topology
        self.loop = EventLoop()
        self.duration_us = round(duration_s * US_PER_S)
        self.warmup_us = round(duration_s * warmup_frac * US_PER_S)
        self.duration_s = duration_s
        self.warmup_s = self.warmup_us / US_PER_S
        self.seed = seed
        self.trace = trace

        def rng(name: str) -> random.Random:
            return random.Random(f"{seed}:{name}")

        self.rng = rng
        self.fwd_stats = [TimeAverage() for _ in topology.forward]
        self.rev_stats = [TimeAverage() for _ in topology.reverse]
        self.forward = tuple(
            build_node(
                spec, f"fwd{i}", self.loop, rng(f"svc:fwd{i}"), rng(f"loss:fwd{i}"),
                self._forward_exit, max_backlog, self.warmup_us,
                self.fwd_stats[i], trace,
            )
            for i, spec in enumerate(topology.forward)
        )
        self.reverse = tuple(
            build_node(
                spec, f"rev{i}", self.loop, rng(f"svc:rev{i}"), rng(f"loss:rev{i}"),
                self._reverse_exit, max_backlog, self.warmup_us,
                self.rev_stats[i], trace,
            )
            for i, spec in enumerate(topology.reverse)
        )
        self.age = AgeIntegral()
        self.freshest_seq = 0
        self.generated = 0
        self.generated_window = 0
        self.delivered = 0
        self.discards = 0
        self.sys_time_sum_us = 0
        self.sys_time_count = 0
        self.deliver_update = None  # set by the driving mode
        self.deliver_ack = None
        if self.warmup_us > 0:
            self.loop.schedule(self.warmup_us, self._reset_window_stats)
        for k, flow in enumerate(topology.cross):
            self._start_cross_flow(k, flow)

    def _reset_window_stats(self) -> None:
        now = self.loop.now_us
        for st in self.fwd_stats:
            st.reset(now)
        for st in self.rev_stats:
            st.reset(now)
        self.age.reset(now)

    def _start_cross_flow(self, k, flow) -> None:
        path = self.forward[flow.entry : flow.exit + 1]
        gen_rng = self.rng(f"cross{k}")
        expo = gen_rng.expovariate
        rate = flow.rate_pps
        bits = flow.bits
        loop = self.loop

        def arrive_one():
            pkt = Packet(K_CROSS, 0, loop.now_us, bits, path)
            loop.schedule(loop.now_us + round(expo(rate) * US_PER_S), arrive_one)
            path[0].arrive(pkt)

        loop.schedule(round(expo(rate) * US_PER_S), arrive_one)

    # -- packet sinks --------------------------------------------------------

    def _forward_exit(self, pkt: Packet) -> None:
        if pkt.kind == K_UPDATE:
            self.deliver_update(pkt)
        # cross traffic vanishes at its exit node

    def _reverse_exit(self, pkt: Packet) -> None:
        if pkt.kind == K_ACK:
            self.deliver_ack(pkt)

    def accept_at_monitor(self, pkt: Packet) -> bool:
        """Freshness bookkeeping shared by both modes. True if fresh."""
        now = self.loop.now_us
        self.delivered += 1
        if now >= self.warmup_us:
            self.sys_time_sum_us += now - pkt.gen_us
            self.sys_time_count += 1
        if pkt.seq > self.freshest_seq:
            self.freshest_seq = pkt.seq
            self.age.set_z(now, pkt.gen_us)
            return True
        self.discards += 1
        return False

    def inject_update(self, seq: int, gen_us: int, bits: int) -> None:
        self.generated += 1
        if self.loop.now_us >= self.warmup_us:
            self.generated_window += 1
        pkt = Packet(K_UPDATE, seq, gen_us, bits, self.forward)
        self.forward[0].arrive(pkt)

    def send_ack(self, ack: AckHeader) -> None:
        pkt = Packet(K_ACK, ack.seq, ack.echo_timestamp_us,
                     self.topology.ack_bits, self.reverse)
        if self.reverse:
            self.reverse[0].arrive(pkt)
        else:
            self.deliver_ack(pkt)

    # -- reporting -----------------------------------------------------------

    def node_stats(self, nodes, stats) -> tuple:
        end = self.duration_us
        out = []
        for node, st in zip(nodes, stats):
            deps = node.dep_count
            out.append(NodeStats(
                avg_backlog=st.mean(end),
                departures=deps,
                mean_sojourn_s=(node.sojourn_sum_us / deps / US_PER_S) if deps else None,
                update_drops=node.update_drops,
                occupancy_end=node.update_count,
            ))
        return tuple(out)

    def window_s(self) -> float:
        return (self.duration_us - self.warmup_us) / US_PER_S


def run(topology: Topology, workload, duration_s: float, seed,
        warmup_frac: float = 0.1, max_backlog: int = 100_000,
        trace=None) -> SimReport:
    """Open-loop workload through the forward chain; no feedback path."""
    net = _Network(topology, seed, duration_s, warmup_frac, max_backlog, trace)
    net.deliver_update = net.accept_at_monitor
    loop = net.loop

    if isinstance(workload, Poisson):
        if workload.rate <= 0:
            raise ValueError("workload rate must be positive")
        expo = net.rng("arrivals").expovariate
        rate = workload.rate
        gap = lambda: round(expo(rate) * US_PER_S)
    elif isinstance(workload, Periodic):
        if workload.rate <= 0:
            raise ValueError("workload rate must be positive")
        period = max(1, round(US_PER_S / workload.rate))
        gap = lambda: period
    else:
        raise TypeError(f"not a workload: {workload!r}")

    bits = topology.update_bits
    seq_box = [0]

    def generate():
        seq_box[0] += 1
        loop.schedule(loop.now_us + gap(), generate)
        net.inject_update(seq_box[0], loop.now_us, bits)

    loop.schedule(gap(), generate)
    loop.run_until(net.duration_us)

    window = net.window_s()
    return SimReport(
        duration_s=net.duration_s,
        warmup_s=net.warmup_s,
        time_avg_age=net.age.mean_seconds(net.duration_us),
        source_est_age=None,
        source_avg_backlog=None,
        forward_nodes=net.node_stats(net.forward, net.fwd_stats),
        reverse_nodes=(),
        mean_rtt=None,
        mean_system_time=(
            net.sys_time_sum_us / net.sys_time_count / US_PER_S
            if net.sys_time_count else None
        ),
        updates_generated=net.generated,
        updates_delivered=net.delivered,
        updates_dropped=sum(n.update_drops for n in net.forward),
        monitor_discards=net.discards,
        in_flight_at_end=sum(n.update_count for n in net.forward),
        achieved_lambda=net.generated_window / window if window > 0 else 0.0,
        controller="open-loop",
        final_rate=None,
        stalled=False,
    )


def _to_source_config(controller, topology: Topology) -> SourceConfig:
    payload_len = max(0, round(topology.update_bits / 8) - HEADER_LEN)
    if isinstance(controller, AcpController):
        return SourceConfig(
            control=ControlConfig(
                kappa=controller.kappa,
                lambda_min=controller.lambda_min,
                lambda_max=controller.lambda_max,
                epoch_multiplier=controller.epoch_multiplier,
                guard_uses_realized_change=controller.guard_uses_realized_change,
            ),
            controller="acp",
            alpha=controller.alpha,
            payload_len=payload_len,
        )
    if isinstance(controller, LazyController):
        return SourceConfig(
            control=ControlConfig(
                lambda_min=controller.lambda_min,
                lambda_max=controller.lambda_max,
            ),
            controller="lazy",
            alpha=controller.alpha,
            payload_len=payload_len,
        )
    if isinstance(controller, FixedRateController):
        return SourceConfig(
            control=ControlConfig(),
            controller="fixed",
            fixed_rate=controller.rate,
            alpha=controller.alpha,
            payload_len=payload_len,
        )
    raise TypeError(f"not a controller: {controller!r}")


def run_acp_in_sim(topology: Topology, controller, duration_s: float, seed,
                   warmup_frac: float = 0.1, max_backlog: int = 100_000,
                   trace=None) -> SimReport:
    """Host the protocol endpoints under virtual time."""
    net = _Network(topology, seed, duration_s, warmup_frac, max_backlog, trace)
    cfg = _to_source_config(controller, topology)
    src = SourceEndpoint(cfg, start_us=0)
    monitor = MonitorEndpoint()
    loop = net.loop
    update_bits = 8 * (HEADER_LEN + cfg.payload_len)
    est_age = AgeIntegral()
    src_backlog = TimeAverage()
    state = {
        "token": 0, "sent_window": 0, "rtt_sum_us": 0, "rtt_count": 0,
        "stall_events": 0,
    }

    def handle(effects):
        for eff in effects:
            if isinstance(eff, SendUpdate):
                h = eff.header
                if loop.now_us >= net.warmup_us:
                    state["sent_window"] += 1
                net.inject_update(h.seq, h.gen_timestamp_us, update_bits)
            elif isinstance(eff, Stalled):
                state["stall_events"] += 1
            # EpochClosed rows accumulate on the endpoint itself;
            # InitComplete is implicit in the first rows.
        src_backlog.set(loop.now_us, src.path.backlog())

    def arm():
        state["token"] += 1
        tok = state["token"]
        at = max(src.next_wake_us(), loop.now_us)
        loop.schedule(at, lambda: fire(tok))

    def fire(tok):
        if tok != state["token"]:
            return
        handle(src.step(loop.now_us))
        arm()

    def update_arrives(pkt: Packet):
        net.accept_at_monitor(pkt)
        h = UpdateHeader(seq=pkt.seq, gen_timestamp_us=pkt.gen_us,
                         payload_len=cfg.payload_len)
        ack = monitor.on_update(h, loop.now_us)
        if ack is not None:
            net.send_ack(ack)

    def ack_arrives(pkt: Packet):
        res = src.on_ack(AckHeader(seq=pkt.seq, echo_timestamp_us=pkt.gen_us),
                         loop.now_us)
        if res.accepted:
            est_age.set_z(loop.now_us, pkt.gen_us)
            src_backlog.set(loop.now_us, src.path.backlog())
            if loop.now_us >= net.warmup_us:
                state["rtt_sum_us"] += res.rtt_us
                state["rtt_count"] += 1
        arm()

    net.deliver_update = update_arrives
    net.deliver_ack = ack_arrives
    if net.warmup_us > 0:
        def reset_endpoint_stats():
            est_age.reset(loop.now_us)
            src_backlog.reset(loop.now_us)
        loop.schedule(net.warmup_us, reset_endpoint_stats)

    arm()
    loop.run_until(net.duration_us)

    window = net.window_s()
    return SimReport(
        duration_s=net.duration_s,
        warmup_s=net.warmup_s,
        time_avg_age=net.age.mean_seconds(net.duration_us),
        source_est_age=est_age.mean_seconds(net.duration_us),
        source_avg_backlog=src_backlog.mean(net.duration_us),
        forward_nodes=net.node_stats(net.forward, net.fwd_stats),
        reverse_nodes=net.node_stats(net.reverse, net.rev_stats),
        mean_rtt=(
            state["rtt_sum_us"] / state["rtt_count"] / US_PER_S
            if state["rtt_count"] else None
        ),
        mean_system_time=(
            net.sys_time_sum_us / net.sys_time_count / US_PER_S
            if net.sys_time_count else None
        ),
        updates_generated=net.generated,
        updates_delivered=net.delivered,
        updates_dropped=(
            sum(n.update_drops for n in net.forward)
        ),
        monitor_discards=net.discards,
        in_flight_at_end=sum(n.update_count for n in net.forward),
        achieved_lambda=state["sent_window"] / window if window > 0 else 0.0,
        controller=cfg.controller,
        final_rate=src.rate,
        stalled=state["stall_events"] > 0,
        decisions=tuple(src.rows),
    )


# -- sweeps and profiles -----------------------------------------------------


@dataclass(frozen=True)
class SweepPoint:
    rate: float
    age: float | None
    unstable: bool
    report: SimReport | None


@dataclass(frozen=True)
class ProfileResult:
    sweep: tuple
    optimal_rate: float
    report: SimReport  # long verification run at optimal_rate

    @property
    def per_node_backlog(self) -> tuple:
        return tuple(n.avg_backlog for n in self.report.forward_nodes)

    @property
    def total_backlog(self) -> float:
        return self.report.total_avg_backlog


def _make_workload(kind: str, rate: float):
    if kind == "poisson":
        return Poisson(rate)
    if kind == "periodic":
        return Periodic(rate)
    raise ValueError(f"unknown workload kind {kind!r}")


def age_vs_lambda_sweep(topology: Topology, rates, duration_s: float, seed,
                        workload: str = "poisson", warmup_frac: float = 0.1,
                        max_backlog: int = 100_000) -> list[SweepPoint]:
    """One run per rate, all sharing the seed (common random numbers)."""
    if not rates:
        raise ValueError("need at least one rate")
    if sorted(rates) != list(rates):
        raise ValueError("rates must be sorted ascending")
    points = []
    for rate in rates:
        try:
            report = run(topology, _make_workload(workload, rate), duration_s,
                         seed, warmup_frac, max_backlog)
            points.append(SweepPoint(rate, report.time_avg_age, False, report))
        except InstabilityError:
            points.append(SweepPoint(rate, None, True, None))
    return points


def sweep_argmin(points) -> SweepPoint:
    stable = [p for p in points if not p.unstable]
    if not stable:
        raise InstabilityError("all", 0, 0)
    return min(stable, key=lambda p: p.age)


def _parabolic_refine(points, best_idx: int) -> float:
    """Vertex of the parabola through the argmin and its neighbors.

    Falls back to the grid argmin when the fit degenerates or the vertex
    escapes the bracketing interval.
    """
    if best_idx == 0 or best_idx == len(points) - 1:
        return points[best_idx].rate
    left, mid, right = points[best_idx - 1], points[best_idx], points[best_idx + 1]
    if left.unstable or right.unstable:
        return mid.rate
    x0, x1, x2 = left.rate, mid.rate, right.rate
    f0, f1, f2 = left.age, mid.age, right.age
    num = (x1 - x0) ** 2 * (f1 - f2) - (x1 - x2) ** 2 * (f1 - f0)
    den = (x1 - x0) * (f1 - f2) - (x1 - x2) * (f1 - f0)
    if den == 0:
        return x1
    vertex = x1 - 0.5 * num / den
    if not x0 < vertex < x2:
        return x1
    return vertex


def optimal_backlog_profile(topology: Topology, rates, duration_s: float, seed,
                            rerun_factor: float = 4.0, workload: str = "poisson",
                            warmup_frac: float = 0.1, max_backlog: int = 100_000,
                            refine: bool = True) -> ProfileResult:
    """Sweep for the age-minimizing rate, then rerun longer to profile
    per-node backlog at that rate."""
    points = age_vs_lambda_sweep(topology, rates, duration_s, seed,
                                 workload, warmup_frac, max_backlog)
    stable = [p for p in points if not p.unstable]
    if not stable:
        raise InstabilityError("all", 0, 0)
    best = sweep_argmin(points)
    best_idx = points.index(best)
    rate = _parabolic_refine(points, best_idx) if refine else best.rate
    report = run(topology, _make_workload(workload, rate),
                 duration_s * rerun_factor, seed, warmup_frac, max_backlog)
    return ProfileResult(sweep=tuple(points), optimal_rate=rate, report=report)
