"""Wall-clock UDP drivers for the source and monitor endpoints.

The endpoints themselves are transport-free; this module supplies the real
clock and sockets, polling with short timeouts so timer deadlines and
arriving datagrams interleave on one thread.
"""

from __future__ import annotations

import select
import socket
import time
from dataclasses import dataclass

from .endpoint import (
    MonitorEndpoint,
    PeerStats,
    SendUpdate,
    SourceConfig,
    SourceEndpoint,
    Stalled,
)
from .errors import MalformedPacketError
from .sample_path import US_PER_S
from .wire import AckHeader, DecodedUpdate, decode_packet, encode_ack, encode_update

# Cap on a single poll so the loop stays responsive to wall-clock drift.
_POLL_SLICE_S = 0.05


class SystemClock:
    """Monotonic microseconds since construction (fits the u64 wire field)."""

    def __init__(self):
        self._t0 = time.monotonic_ns()

    def now_us(self) -> int:
        return (time.monotonic_ns() - self._t0) // 1000


def _drain(sock, handler) -> None:
    while True:
        try:
            data, addr = sock.recvfrom(65535)
        except (BlockingIOError, InterruptedError):
            return
        except ConnectionRefusedError:
            # ICMP port-unreachable surfaced on a connected socket; the
            # datagram is simply gone, which the probe schedule handles.
            continue
        handler(data, addr)


@dataclass
class SourceRunResult:
    sent: int
    accepted_acks: int
    acked_seqs: list
    send_log: list  # (seq, scheduled gen_timestamp_us) in send order
    rows: list  # per-epoch decision rows
    avg_age_s: float | None
    avg_backlog: float | None
    mean_rtt_s: float | None
    achieved_rate: float
    final_rate: float
    stall_events: int
    malformed: int
    duration_s: float


def run_source(
    host: str,
    port: int,
    config: SourceConfig,
    updates: int = 1000,
    linger_s: float = 1.0,
    clock: SystemClock | None = None,
) -> SourceRunResult:
    """Drive one connection: init probes, rate-controlled sending, exit
    after `updates` datagrams plus a linger window for late ACKs."""
    clock = clock or SystemClock()
    payload = bytes(config.payload_len)
    sent = 0
    accepted = 0
    acked_seqs: list = []
    send_log: list = []
    rtt_sum = 0.0
    stall_events = 0
    malformed = 0
    age_area = 0.0  # sum of epoch avg_age * epoch length
    backlog_area = 0.0
    time_covered = 0.0

    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sock.setblocking(False)
    try:
        sock.connect((host, port))
        src = SourceEndpoint(config, start_us=clock.now_us())
        start_us = clock.now_us()
        last_send_us = start_us

        def on_datagram(data, _addr):
            nonlocal accepted, rtt_sum, malformed
            try:
                decoded = decode_packet(data)
            except MalformedPacketError:
                malformed += 1
                return
            if not isinstance(decoded, AckHeader):
                return  # an update arriving at a source is noise
            res = src.on_ack(decoded, clock.now_us())
            if res.accepted:
                accepted += 1
                acked_seqs.append(decoded.seq)
                rtt_sum += max(res.rtt_us, 1) / US_PER_S

        while True:
            now = clock.now_us()
            if now >= src.next_wake_us():
                for eff in src.step(now):
                    if isinstance(eff, SendUpdate):
                        try:
                            sock.send(encode_update(eff.header, payload))
                        except (ConnectionRefusedError, OSError):
                            pass  # datagram lost; timers handle the rest
                        sent += 1
                        last_send_us = clock.now_us()
                        send_log.append((eff.header.seq, eff.header.gen_timestamp_us))
                        if sent >= updates:
                            src.halt_sending()
                    elif isinstance(eff, Stalled):
                        stall_events += 1
                now = clock.now_us()
            if sent >= updates and now - last_send_us >= linger_s * US_PER_S:
                break
            wait = min(
                max(src.next_wake_us() - now, 0) / US_PER_S, _POLL_SLICE_S
            )
            ready, _, _ = select.select([sock], [], [], wait)
            if ready:
                _drain(sock, on_datagram)

        end_us = clock.now_us()
        for row in src.rows:
            age_area += row.avg_age_s * row.epoch_len_s
            backlog_area += row.avg_backlog * row.epoch_len_s
            time_covered += row.epoch_len_s
        tail = src.path.close_epoch(end_us)
        if tail.duration_s > 0:
            age_area += tail.avg_age * tail.duration_s
            backlog_area += tail.avg_backlog * tail.duration_s
            time_covered += tail.duration_s
        duration_s = (end_us - start_us) / US_PER_S
        return SourceRunResult(
            sent=sent,
            accepted_acks=accepted,
            acked_seqs=acked_seqs,
            send_log=send_log,
            rows=list(src.rows),
            avg_age_s=age_area / time_covered if time_covered > 0 else None,
            avg_backlog=backlog_area / time_covered if time_covered > 0 else None,
            mean_rtt_s=rtt_sum / accepted if accepted else None,
            achieved_rate=sent / duration_s if duration_s > 0 else 0.0,
            final_rate=src.rate,
            stall_events=stall_events,
            malformed=malformed,
            duration_s=duration_s,
        )
    finally:
        sock.close()


@dataclass
class MonitorRunResult:
    peers: dict
    received: int
    accepted: int
    discarded: int
    malformed: int
    duration_s: float

    @property
    def totals(self) -> PeerStats:
        agg = PeerStats()
        for st in self.peers.values():
            agg.received += st.received
            agg.accepted += st.accepted
            agg.discarded += st.discarded
            agg.acks_sent += st.acks_sent
        return agg


def run_monitor(
    bind_host: str,
    port: int,
    expected_updates: int = 0,
    idle_exit_s: float = 0.0,
    stop=None,
    clock: SystemClock | None = None,
) -> MonitorRunResult:
    """Listen, ACK fresh updates, and exit on whichever comes first of:
    `expected_updates` received, `idle_exit_s` of silence after the first
    packet, or `stop` (a threading.Event) being set."""
    clock = clock or SystemClock()
    mon = MonitorEndpoint()
    received = 0
    malformed = 0
    start_us = clock.now_us()
    last_rx_us = None

    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    try:
        sock.bind((bind_host, port))
        sock.setblocking(False)

        def on_datagram(data, addr):
            nonlocal received, malformed, last_rx_us
            now = clock.now_us()
            last_rx_us = now
            try:
                decoded = decode_packet(data)
            except MalformedPacketError:
                malformed += 1
                return
            if not isinstance(decoded, DecodedUpdate):
                return
            received += 1
            ack = mon.on_update(decoded.header, now, peer=addr)
            if ack is not None:
                try:
                    sock.sendto(encode_ack(ack), addr)
                except OSError:
                    pass

        while True:
            if stop is not None and stop.is_set():
                break
            if expected_updates and received >= expected_updates:
                break
            if (
                idle_exit_s > 0
                and last_rx_us is not None
                and clock.now_us() - last_rx_us >= idle_exit_s * US_PER_S
            ):
                break
            ready, _, _ = select.select([sock], [], [], _POLL_SLICE_S)
            if ready:
                _drain(sock, on_datagram)

        agg_received = sum(st.received for st in mon.peers.values())
        return MonitorRunResult(
            peers=dict(mon.peers),
            received=agg_received,
            accepted=sum(st.accepted for st in mon.peers.values()),
            discarded=sum(st.discarded for st in mon.peers.values()),
            malformed=malformed,
            duration_s=(clock.now_us() - start_us) / US_PER_S,
        )
    finally:
        sock.close()
