"""Packets, service models, and store-and-forward nodes.

A node is an unbounded FIFO with one server. Service completion pushes the
packet one hop along its fixed path; an optional Bernoulli coin models loss
on the node's outgoing link. Cross-traffic packets share the servers with
updates but are invisible to the protocol layer.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from ..errors import InstabilityError

K_UPDATE = 0
K_ACK = 1
K_CROSS = 2


class Packet:
    __slots__ = ("kind", "seq", "gen_us", "bits", "path", "hop", "node_arr_us")

    def __init__(self, kind: int, seq: int, gen_us: int, bits: int, path: tuple):
        self.kind = kind
        self.seq = seq
        self.gen_us = gen_us  # echo timestamp for ACK packets
        self.bits = bits
        self.path = path
        self.hop = 0
        self.node_arr_us = 0


# -- service models -------------------------------------------------------


@dataclass(frozen=True)
class Exponential:
    """Memoryless service at rate mu (services per second)."""

    mu: float


@dataclass(frozen=True)
class Deterministic:
    """Constant service time in seconds, independent of packet size."""

    time_s: float


@dataclass(frozen=True)
class LinkRate:
    """Transmission over a link: service time = packet bits / rate."""

    bits_per_second: float


@dataclass(frozen=True)
class Delay:
    """Pure propagation: every packet forwarded after a fixed latency.

    Infinite-server, so it never queues; useful for constant-RTT paths.
    """

    time_s: float


def make_sampler(spec, rng):
    """Service-time sampler in integer microseconds for one node."""
    if isinstance(spec, Exponential):
        if spec.mu <= 0:
            raise ValueError(f"service rate must be positive, got {spec.mu}")
        expo = rng.expovariate
        mu = spec.mu
        return lambda pkt: round(expo(mu) * 1e6)
    if isinstance(spec, Deterministic):
        if spec.time_s < 0:
            raise ValueError(f"service time must be non-negative, got {spec.time_s}")
        const = round(spec.time_s * 1e6)
        return lambda pkt: const
    if isinstance(spec, LinkRate):
        if spec.bits_per_second <= 0:
            raise ValueError(f"link rate must be positive, got {spec.bits_per_second}")
        scale = 1e6 / spec.bits_per_second
        return lambda pkt: round(pkt.bits * scale)
    raise TypeError(f"not a queueing service spec: {spec!r}")


# -- topology description --------------------------------------------------


@dataclass(frozen=True)
class NodeSpec:
    service: object  # Exponential | Deterministic | LinkRate | Delay
    loss_prob: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.loss_prob < 1.0:
            raise ValueError(f"loss_prob must be in [0, 1), got {self.loss_prob}")


@dataclass(frozen=True)
class CrossFlowSpec:
    """Poisson background traffic entering and leaving the forward chain."""

    entry: int  # first forward node traversed
    exit: int  # last forward node traversed (inclusive)
    rate_pps: float
    bits: int = 1000

    def __post_init__(self):
        if self.exit < self.entry:
            raise ValueError(f"cross flow exit {self.exit} before entry {self.entry}")
        if self.rate_pps <= 0 or self.bits <= 0:
            raise ValueError("cross flow rate and size must be positive")


@dataclass(frozen=True)
class Topology:
    forward: tuple = ()
    reverse: tuple = ()  # empty tuple: ACKs return instantly
    cross: tuple = ()
    update_bits: int = 1000
    ack_bits: int = 128

    def __post_init__(self):
        if not self.forward:
            raise ValueError("topology needs at least one forward node")
        for flow in self.cross:
            if not 0 <= flow.entry <= flow.exit < len(self.forward):
                raise ValueError(
                    f"cross flow {flow} does not fit a {len(self.forward)}-node chain"
                )

    @staticmethod
    def mm1(mu: float = 1.0) -> "Topology":
        return Topology(forward=(NodeSpec(Exponential(mu)),))

    @staticmethod
    def tandem(*mus: float) -> "Topology":
        return Topology(forward=tuple(NodeSpec(Exponential(m)) for m in mus))

    @staticmethod
    def chain_mbps(
        rates_mbps,
        symmetric: bool = True,
        cross_mbps: float = 0.0,
        cross_bits: int = 12_000,
        loss_prob: float = 0.0,
    ) -> "Topology":
        """A multi-hop chain of point-to-point links.

        One node per link, service time = bits/rate. With symmetric=True
        the ACK path mirrors the forward rates. cross_mbps > 0 gives every
        forward link an independent Poisson background flow of cross_bits
        packets (default MTU-sized) consuming that much bandwidth, the way
        each hop of a real path carries its own unrelated traffic.
        """
        fwd = tuple(NodeSpec(LinkRate(r * 1e6), loss_prob) for r in rates_mbps)
        rev = fwd if symmetric else ()
        cross = ()
        if cross_mbps > 0:
            pps = cross_mbps * 1e6 / cross_bits
            cross = tuple(
                CrossFlowSpec(entry=i, exit=i, rate_pps=pps, bits=cross_bits)
                for i in range(len(fwd))
            )
        return Topology(forward=fwd, reverse=rev, cross=cross)


# -- runtime nodes ---------------------------------------------------------


class QueueNode:
    """Single-server FIFO with Bernoulli loss on the outgoing hop."""

    __slots__ = (
        "node_id", "loop", "sampler", "loss_prob", "loss_rng", "deliver",
        "max_backlog", "warmup_us", "buffer", "in_service", "update_count",
        "backlog_avg", "dep_count", "sojourn_sum_us", "update_drops", "trace",
    )

    def __init__(
        self, node_id, loop, sampler, loss_prob, loss_rng, deliver,
        max_backlog, warmup_us, backlog_avg, trace=None,
    ):
        self.node_id = node_id
        self.loop = loop
        self.sampler = sampler
        self.loss_prob = loss_prob
        self.loss_rng = loss_rng
        self.deliver = deliver  # called when a packet leaves the last hop
        self.max_backlog = max_backlog
        self.warmup_us = warmup_us
        self.buffer = deque()
        self.in_service = None
        self.update_count = 0
        self.backlog_avg = backlog_avg
        self.dep_count = 0
        self.sojourn_sum_us = 0
        self.update_drops = 0
        self.trace = trace

    def arrive(self, pkt: Packet) -> None:
        now = self.loop.now_us
        pkt.node_arr_us = now
        if self.trace is not None and pkt.kind != K_CROSS:
            self.trace.append((now, self.node_id, "arr", pkt.seq))
        if pkt.kind == K_UPDATE:
            self.update_count += 1
            self.backlog_avg.add(now, 1)
        if self.in_service is None:
            self._begin(pkt)
        else:
            self.buffer.append(pkt)
            if len(self.buffer) + 1 > self.max_backlog:
                raise InstabilityError(self.node_id, len(self.buffer) + 1, now)

    def _begin(self, pkt: Packet) -> None:
        self.in_service = pkt
        self.loop.schedule(self.loop.now_us + self.sampler(pkt), self._complete)

    def _complete(self) -> None:
        pkt = self.in_service
        now = self.loop.now_us
        if pkt.kind == K_UPDATE:
            self.update_count -= 1
            self.backlog_avg.add(now, -1)
            if now >= self.warmup_us:
                self.dep_count += 1
                self.sojourn_sum_us += now - pkt.node_arr_us
        if self.trace is not None and pkt.kind != K_CROSS:
            self.trace.append((now, self.node_id, "dep", pkt.seq))
        if self.buffer:
            self._begin(self.buffer.popleft())
        else:
            self.in_service = None
        if self.loss_prob and self.loss_rng.random() < self.loss_prob:
            if pkt.kind == K_UPDATE:
                self.update_drops += 1
            return
        pkt.hop += 1
        if pkt.hop < len(pkt.path):
            pkt.path[pkt.hop].arrive(pkt)
        else:
            self.deliver(pkt)


class DelayNode:
    """Fixed-latency hop with unlimited parallelism (a wire, not a queue)."""

    __slots__ = (
        "node_id", "loop", "delay_us", "loss_prob", "loss_rng", "deliver",
        "warmup_us", "update_count", "backlog_avg", "dep_count",
        "sojourn_sum_us", "update_drops", "trace",
    )

    def __init__(
        self, node_id, loop, delay_us, loss_prob, loss_rng, deliver,
        warmup_us, backlog_avg, trace=None,
    ):
        self.node_id = node_id
        self.loop = loop
        self.delay_us = delay_us
        self.loss_prob = loss_prob
        self.loss_rng = loss_rng
        self.deliver = deliver
        self.warmup_us = warmup_us
        self.update_count = 0
        self.backlog_avg = backlog_avg
        self.dep_count = 0
        self.sojourn_sum_us = 0
        self.update_drops = 0
        self.trace = trace

    def arrive(self, pkt: Packet) -> None:
        now = self.loop.now_us
        pkt.node_arr_us = now
        if self.trace is not None and pkt.kind != K_CROSS:
            self.trace.append((now, self.node_id, "arr", pkt.seq))
        if pkt.kind == K_UPDATE:
            self.update_count += 1
            self.backlog_avg.add(now, 1)
        self.loop.schedule(now + self.delay_us, lambda: self._emerge(pkt))

    def _emerge(self, pkt: Packet) -> None:
        now = self.loop.now_us
        if pkt.kind == K_UPDATE:
            self.update_count -= 1
            self.backlog_avg.add(now, -1)
            if now >= self.warmup_us:
                self.dep_count += 1
                self.sojourn_sum_us += now - pkt.node_arr_us
        if self.trace is not None and pkt.kind != K_CROSS:
            self.trace.append((now, self.node_id, "dep", pkt.seq))
        if self.loss_prob and self.loss_rng.random() < self.loss_prob:
            if pkt.kind == K_UPDATE:
                self.update_drops += 1
            return
        pkt.hop += 1
        if pkt.hop < len(pkt.path):
            pkt.path[pkt.hop].arrive(pkt)
        else:
            self.deliver(pkt)


def build_node(spec: NodeSpec, node_id, loop, rng_svc, rng_loss, deliver,
               max_backlog, warmup_us, backlog_avg, trace=None):
    if isinstance(spec.service, Delay):
        return DelayNode(
            node_id, loop, round(spec.service.time_s * 1e6), spec.loss_prob,
            rng_loss, deliver, warmup_us, backlog_avg, trace,
        )
    return QueueNode(
        node_id, loop, make_sampler(spec.service, rng_svc), spec.loss_prob,
        rng_loss, deliver, max_backlog, warmup_us, backlog_avg, trace,
    )
