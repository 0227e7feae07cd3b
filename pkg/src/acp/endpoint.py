"""Transport-agnostic source and monitor state machines.

The source is driven by two inputs only: step(now_us), called whenever its
next_wake_us() deadline arrives (or later), and on_ack(header, now_us) when
an ACK datagram shows up. step returns a list of effects; the caller turns
SendUpdate effects into datagrams. The same machine therefore runs
unchanged under the simulator's virtual clock and over real UDP sockets.

Lifecycle: an initialization phase sends a fixed number of probes
stop-and-wait (each resolving by ACK or timeout) to measure the path; the
inverse mean probe RTT seeds the send rate. After that the source sends
periodically, closes a measurement epoch every period_multiplier feedback
timescales, and lets the configured controller adjust the rate:

* "acp": the adaptive decision rule from acp.control,
* "lazy": rate pinned to the inverse smoothed RTT, adjusted per ACK,
* "fixed": constant rate (the initialization phase still runs).

Updates are generated at their scheduled instants: the wire timestamp of a
periodic update is the scheduled send time, not the (possibly late) wake
time, so within an epoch wire timestamps are exactly 1/lambda apart.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

from .control import (
    ControlConfig,
    ControlState,
    decide,
    epoch_period,
    lazy_rate,
    target_to_rate,
)
from .errors import ConnectionFailedError
from .sample_path import AckEvent, AckResult, EwmaEstimator, SamplePath
from .wire import AckHeader, UpdateHeader, ack_for

US_PER_S = 1_000_000


class Phase(enum.Enum):
    INIT = "init"
    RUNNING = "running"


@dataclass(frozen=True)
class SourceConfig:
    control: ControlConfig = field(default_factory=ControlConfig)
    controller: str = "acp"  # acp | lazy | fixed
    fixed_rate: float | None = None  # required for controller="fixed"
    alpha: float = 0.125  # EWMA weight for both RTT and inter-delivery
    init_probes: int = 10
    probe_timeout_s: float = 1.0
    payload_len: int = 109  # 16-byte header + 109 = 125-byte datagram
    stall_epochs: int = 10  # declare a stall after this many periods silent

    def __post_init__(self):
        if self.controller not in ("acp", "lazy", "fixed"):
            raise ValueError(f"unknown controller {self.controller!r}")
        if self.controller == "fixed":
            if self.fixed_rate is None or self.fixed_rate <= 0:
                raise ValueError("fixed controller needs a positive fixed_rate")
        if self.init_probes < 1:
            raise ValueError("need at least one probe")
        if self.probe_timeout_s <= 0:
            raise ValueError("probe timeout must be positive")


# -- effects returned by step ----------------------------------------------


@dataclass(frozen=True)
class SendUpdate:
    header: UpdateHeader


@dataclass(frozen=True)
class InitComplete:
    rate: float
    probe_successes: int


@dataclass(frozen=True)
class EpochClosed:
    row: "DecisionRow"


@dataclass(frozen=True)
class Stalled:
    silent_for_s: float


@dataclass(frozen=True)
class DecisionRow:
    """One epoch boundary: measurements, the action taken, the new rate."""

    epoch: int
    t_s: float
    avg_age_s: float
    avg_backlog: float
    b_pkts: float | None  # backlog change vs previous epoch
    delta_s: float | None  # age change vs previous epoch
    action: str  # INC / DEC / MDEC(g) / HOLD / STALL / LAZY / FIXED
    gamma: int
    target_pkts: float | None
    rate: float  # rate in force for the next epoch
    rtt_ewma_s: float
    z_ewma_s: float | None
    epoch_len_s: float  # length of the epoch just closed


class SourceEndpoint:
    """Single-connection source. Caller serializes step/on_ack."""

    def __init__(self, config: SourceConfig, start_us: int = 0):
        self.config = config
        self.phase = Phase.INIT
        self.path = SamplePath(start_us)
        self.rtt_ewma = EwmaEstimator(config.alpha)
        self.z_ewma = EwmaEstimator(config.alpha)
        self.control = ControlState(lam=config.control.lambda_min)
        self.next_seq = 1
        self.sending_enabled = True
        self.stalled = False
        self.last_accept_us: int | None = None
        self.rows: list[DecisionRow] = []
        # init-phase bookkeeping
        self._probes_sent = 0
        self._probe_outstanding = False
        self._probe_seq = 0
        self._probe_deadline_us = start_us
        self._init_rtts_us: list[int] = []
        self._wake_us = start_us
        # running-phase bookkeeping
        self._next_send_us = 0
        self._period_us = 0
        self._epoch_deadline_us = 0
        self._epoch_len_us = 0
        self._prev_stats = None
        self._epoch_index = 0

    # -- caller interface --------------------------------------------------

    def next_wake_us(self) -> int:
        if self.phase is Phase.INIT:
            return self._wake_us
        if self.sending_enabled:
            return min(self._next_send_us, self._epoch_deadline_us)
        return self._epoch_deadline_us

    def step(self, now_us: int) -> list:
        if self.phase is Phase.INIT:
            return self._step_init(now_us)
        return self._step_running(now_us)

    def on_ack(self, h: AckHeader, now_us: int) -> AckResult:
        res = self.path.record_ack(
            AckEvent(seq=h.seq, echo_timestamp_us=h.echo_timestamp_us, recv_time_us=now_us)
        )
        if not res.accepted:
            return res
        # Floor at one tick: a same-microsecond round trip is still a sample.
        rtt_s = max(res.rtt_us, 1) / US_PER_S
        self.rtt_ewma.update(rtt_s)
        if self.last_accept_us is not None and now_us > self.last_accept_us:
            self.z_ewma.update((now_us - self.last_accept_us) / US_PER_S)
        self.last_accept_us = now_us
        self.stalled = False
        if self.phase is Phase.INIT:
            self._init_rtts_us.append(res.rtt_us)
            if self._probe_outstanding and h.seq >= self._probe_seq:
                self._probe_outstanding = False
                self._wake_us = now_us  # move on to the next probe at once
        elif self.config.controller == "lazy":
            self._set_rate(lazy_rate(self.rtt_ewma.value, self.config.control), now_us)
        return res

    def halt_sending(self) -> None:
        """Stop emitting updates; ACK handling and epochs continue."""
        self.sending_enabled = False

    @property
    def rate(self) -> float:
        return self.control.lam

    # -- init phase ----------------------------------------------------------

    def _step_init(self, now_us: int) -> list:
        cfg = self.config
        if self._probe_outstanding:
            if now_us < self._probe_deadline_us:
                return []
            self._probe_outstanding = False  # timed out; update stays pending
        if self._probes_sent < cfg.init_probes:
            seq = self.next_seq
            self.next_seq += 1
            self.path.record_send(now_us, seq)
            self._probes_sent += 1
            self._probe_outstanding = True
            self._probe_seq = seq
            self._probe_deadline_us = now_us + round(cfg.probe_timeout_s * US_PER_S)
            self._wake_us = self._probe_deadline_us
            return [
                SendUpdate(UpdateHeader(
                    seq=seq, gen_timestamp_us=now_us, payload_len=cfg.payload_len,
                ))
            ]
        return self._finish_init(now_us)

    def _finish_init(self, now_us: int) -> list:
        cfg = self.config
        if not self._init_rtts_us:
            raise ConnectionFailedError(
                f"no probe of {cfg.init_probes} was acknowledged"
            )
        mean_rtt_s = sum(self._init_rtts_us) / len(self._init_rtts_us) / US_PER_S
        rate_1 = cfg.control.clamp(1.0 / mean_rtt_s)
        if cfg.controller == "fixed":
            rate_1 = cfg.control.clamp(cfg.fixed_rate)
        self.control = replace(self.control, lam=rate_1)
        self.phase = Phase.RUNNING
        self._period_us = self._rate_to_period_us(rate_1)
        self._next_send_us = now_us
        if now_us > self.path.epoch_start_us:
            # The probe phase becomes the baseline the first decision
            # compares against.
            self._prev_stats = self.path.close_epoch(now_us)
        self._epoch_len_us = self._current_epoch_len_us()
        self._epoch_deadline_us = now_us + self._epoch_len_us
        effects = [InitComplete(rate=rate_1, probe_successes=len(self._init_rtts_us))]
        effects.extend(self._step_running(now_us))
        return effects

    # -- running phase -------------------------------------------------------

    def _step_running(self, now_us: int) -> list:
        effects = []
        if now_us >= self._epoch_deadline_us:
            effects.append(EpochClosed(self._close_epoch(now_us)))
        if (
            self.sending_enabled  # a quiesced sender expects silence
            and not self.stalled
            and self.last_accept_us is not None
            and self._epoch_len_us > 0
            and now_us - self.last_accept_us
            >= self.config.stall_epochs * self._epoch_len_us
        ):
            self.stalled = True
            effects.append(Stalled(silent_for_s=(now_us - self.last_accept_us) / US_PER_S))
        if self.sending_enabled:
            cfg = self.config
            while now_us >= self._next_send_us:
                seq = self.next_seq
                self.next_seq += 1
                self.path.record_send(now_us, seq)
                effects.append(
                    SendUpdate(UpdateHeader(
                        seq=seq,
                        gen_timestamp_us=self._next_send_us,
                        payload_len=cfg.payload_len,
                    ))
                )
                self._next_send_us += self._period_us
        return effects

    def _close_epoch(self, now_us: int) -> DecisionRow:
        stats = self.path.close_epoch(now_us)
        prev = self._prev_stats
        self._prev_stats = stats
        self._epoch_index += 1
        ctrl = self.config.controller
        b_k = delta_k = target = None
        action = {"acp": "HOLD", "lazy": "LAZY", "fixed": "FIXED"}[ctrl]
        if ctrl == "acp" and self.sending_enabled:
            if self.stalled:
                action = "STALL"
            elif (
                prev is not None
                and self.rtt_ewma.initialized
                and self.z_ewma.initialized
            ):
                b_k = stats.avg_backlog - prev.avg_backlog
                delta_k = stats.avg_age - prev.avg_age
                new_control, decision = decide(
                    self.control, b_k, delta_k, stats.avg_backlog, self.config.control
                )
                tau = min(self.rtt_ewma.value, self.z_ewma.value)
                new_rate = target_to_rate(
                    self.z_ewma.value, tau, decision.target, self.config.control
                )
                self.control = new_control
                action = decision.action.label
                target = decision.target
                self._set_rate(new_rate, now_us)
        self._epoch_len_us = self._current_epoch_len_us()
        self._epoch_deadline_us = now_us + self._epoch_len_us
        row = DecisionRow(
            epoch=self._epoch_index,
            t_s=now_us / US_PER_S,
            avg_age_s=stats.avg_age,
            avg_backlog=stats.avg_backlog,
            b_pkts=b_k,
            delta_s=delta_k,
            action=action,
            gamma=self.control.gamma,
            target_pkts=target,
            rate=self.control.lam,
            rtt_ewma_s=self.rtt_ewma.value,
            z_ewma_s=self.z_ewma.value if self.z_ewma.initialized else None,
            epoch_len_s=stats.duration_s,
        )
        self.rows.append(row)
        return row

    def _set_rate(self, rate: float, now_us: int) -> None:
        if rate == self.control.lam:
            return
        self.control = replace(self.control, lam=rate)
        self._period_us = self._rate_to_period_us(rate)
        # Never wait out a long stale period after a rate change, but do
        # not fire a burst either: next send at most one new period away.
        self._next_send_us = min(self._next_send_us, now_us + self._period_us)

    def _rate_to_period_us(self, rate: float) -> int:
        return max(1, round(US_PER_S / rate))

    def _current_epoch_len_us(self) -> int:
        rtt = self.rtt_ewma.value if self.rtt_ewma.initialized else None
        if rtt is None:
            # Unreachable after a successful init, but keep a sane fallback.
            return round(self.config.probe_timeout_s * US_PER_S)
        z = self.z_ewma.value if self.z_ewma.initialized else rtt
        period_s = epoch_period(rtt, z, self.config.control.epoch_multiplier)
        return max(1, round(period_s * US_PER_S))


# -- monitor ----------------------------------------------------------------


@dataclass
class PeerStats:
    freshest_seq: int = 0
    freshest_gen_us: int = 0
    received: int = 0
    accepted: int = 0
    discarded: int = 0
    acks_sent: int = 0
    first_us: int | None = None
    last_us: int | None = None


class MonitorEndpoint:
    """Freshness filter plus ACK generation, keyed by peer address.

    Accepts an update iff its seq is strictly newer than anything seen from
    that peer; only accepted updates are acknowledged, so the ACKed seq
    sequence is strictly increasing and the freshest timestamp never goes
    backwards.
    """

    def __init__(self):
        self.peers: dict = {}
        self.malformed = 0

    def peer(self, key="default") -> PeerStats:
        st = self.peers.get(key)
        if st is None:
            st = self.peers[key] = PeerStats()
        return st

    def on_update(self, h: UpdateHeader, now_us: int, peer="default") -> AckHeader | None:
        st = self.peer(peer)
        st.received += 1
        if st.first_us is None:
            st.first_us = now_us
        st.last_us = now_us
        if h.seq > st.freshest_seq:
            st.freshest_seq = h.seq
            st.freshest_gen_us = h.gen_timestamp_us
            st.accepted += 1
            st.acks_sent += 1
            return ack_for(h)
        st.discarded += 1
        return None
