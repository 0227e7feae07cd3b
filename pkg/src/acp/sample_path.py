"""Source-side reconstruction of the age and backlog sample paths.

The source cannot see the monitor. It rebuilds two processes from its own
send events and the ACKs that return:

* age: time since generation of the freshest update known to have reached
  the monitor. Grows at slope 1; an accepted ACK resets it to the round
  trip time of the update being acknowledged.
* backlog: updates sent but not yet covered by a cumulative ACK.

ACKs are cumulative: accepting seq n implies everything up to n arrived or
no longer matters, so all pending sends with seq <= n are cleared at once.
An ACK whose seq is not newer than the last accepted one carries no fresh
information and is discarded (idempotent; only the clock advances).

All event times are integer microseconds on the source clock. Areas under
the two sample paths are accumulated in exact integer arithmetic; floats
appear only in derived statistics. The age area is kept doubled so that the
trapezoid pieces (dt * (2*a0 + dt) / 2) stay integral.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass

from .errors import (
    ClockAnomalyError,
    DegenerateIntervalError,
    SequencingError,
)

US_PER_S = 1_000_000


def to_seconds(t_us: int) -> float:
    return t_us / US_PER_S


def to_micros(t_s: float) -> int:
    return round(t_s * US_PER_S)


class AckDisposition(enum.Enum):
    ACCEPTED = "accepted"
    DISCARDED = "discarded"


@dataclass(frozen=True)
class SendRecord:
    seq: int
    send_time_us: int


@dataclass(frozen=True)
class AckEvent:
    """An ACK as seen by the source: which seq, the echoed generation
    timestamp, and when it arrived on the local clock."""

    seq: int
    echo_timestamp_us: int
    recv_time_us: int


@dataclass(frozen=True)
class AckResult:
    disposition: AckDisposition
    rtt_us: int | None = None
    acked_count: int = 0

    @property
    def accepted(self) -> bool:
        return self.disposition is AckDisposition.ACCEPTED


@dataclass(frozen=True)
class EpochStats:
    """Time averages over one closed epoch."""

    avg_age: float  # seconds
    avg_backlog: float  # packets
    epoch_start_us: int
    epoch_end_us: int

    @property
    def duration_s(self) -> float:
        return to_seconds(self.epoch_end_us - self.epoch_start_us)


class SamplePath:
    """Joint age/backlog process with exact epoch averages.

    Events must be fed in non-decreasing time order. Between events both
    processes are deterministic (age has slope 1, backlog is constant), so
    integrating lazily at each event gives exact areas.
    """

    def __init__(self, start_us: int = 0):
        self.last_acked_seq = 0
        self.pending: deque[SendRecord] = deque()
        # Age reference point: age(t) = _reset_age_us + (t - _reset_time_us).
        self._reset_time_us = start_us
        self._reset_age_us = 0
        self._last_event_us = start_us
        self.epoch_start_us = start_us
        self._age_area2 = 0  # twice the age area, us^2
        self._backlog_area = 0  # packet-us

    # -- observation ----------------------------------------------------

    def backlog(self) -> int:
        return len(self.pending)

    def age_us(self, t_us: int) -> int:
        if t_us < self._reset_time_us:
            raise SequencingError(
                f"age queried at t={t_us} before last reset at {self._reset_time_us}"
            )
        return self._reset_age_us + (t_us - self._reset_time_us)

    def instantaneous_age(self, t_us: int) -> float:
        """Age in seconds at time t_us (slope-1 growth since last reset)."""
        return to_seconds(self.age_us(t_us))

    @property
    def last_event_us(self) -> int:
        return self._last_event_us

    # -- events ----------------------------------------------------------

    def _advance(self, t_us: int) -> None:
        dt = t_us - self._last_event_us
        if dt < 0:
            raise SequencingError(
                f"event at t={t_us} is before already-recorded t={self._last_event_us}"
            )
        if dt:
            a0 = self.age_us(self._last_event_us)
            self._age_area2 += dt * (2 * a0 + dt)
            self._backlog_area += len(self.pending) * dt
            self._last_event_us = t_us

    def record_send(self, t_us: int, seq: int) -> None:
        if seq <= self.last_acked_seq:
            raise SequencingError(
                f"send seq {seq} not above last acked {self.last_acked_seq}"
            )
        if self.pending and seq <= self.pending[-1].seq:
            raise SequencingError(
                f"send seq {seq} not above pending tail {self.pending[-1].seq}"
            )
        self._advance(t_us)
        self.pending.append(SendRecord(seq, t_us))

    def record_ack(self, ack: AckEvent) -> AckResult:
        if ack.recv_time_us < ack.echo_timestamp_us:
            raise ClockAnomalyError(
                f"ack for seq {ack.seq} received at {ack.recv_time_us} but echoes "
                f"timestamp {ack.echo_timestamp_us}"
            )
        self._advance(ack.recv_time_us)
        if ack.seq <= self.last_acked_seq:
            return AckResult(AckDisposition.DISCARDED)
        rtt_us = ack.recv_time_us - ack.echo_timestamp_us
        removed = 0
        while self.pending and self.pending[0].seq <= ack.seq:
            self.pending.popleft()
            removed += 1
        self.last_acked_seq = ack.seq
        self._reset_time_us = ack.recv_time_us
        self._reset_age_us = rtt_us
        return AckResult(AckDisposition.ACCEPTED, rtt_us=rtt_us, acked_count=removed)

    def close_epoch(self, t_end_us: int) -> EpochStats:
        """Finish the running epoch at t_end_us and start the next one.

        Returns exact time averages over [epoch_start, t_end). Area
        accumulators reset; ages, backlog, and ack state carry over.
        """
        if t_end_us <= self.epoch_start_us:
            raise DegenerateIntervalError(
                f"epoch close at {t_end_us} not after start {self.epoch_start_us}"
            )
        self._advance(t_end_us)
        dur = t_end_us - self.epoch_start_us
        stats = EpochStats(
            avg_age=self._age_area2 / (2 * dur) / US_PER_S,
            avg_backlog=self._backlog_area / dur,
            epoch_start_us=self.epoch_start_us,
            epoch_end_us=t_end_us,
        )
        self._age_area2 = 0
        self._backlog_area = 0
        self.epoch_start_us = t_end_us
        return stats


class EwmaEstimator:
    """Exponentially weighted moving average, seeded by its first sample.

    value <- (1 - alpha) * value + alpha * sample, the classic smoothed
    estimator with alpha defaulting to 1/8.
    """

    __slots__ = ("alpha", "value", "initialized")

    def __init__(self, alpha: float = 0.125):
        if not 0.0 < alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {alpha}")
        self.alpha = alpha
        self.value = 0.0
        self.initialized = False

    def update(self, sample: float) -> float:
        if sample <= 0.0:
            raise ValueError(f"EWMA sample must be positive, got {sample}")
        if not self.initialized:
            self.value = sample
            self.initialized = True
        else:
            self.value = (1.0 - self.alpha) * self.value + self.alpha * sample
        return self.value
