"""Exact time-weighted accumulators over integer-microsecond time.

Both accumulators integrate lazily: state changes record the area
contributed by the previous value, so querying at the end costs one more
piece. reset() restarts the integration window while keeping the current
level, which is how warmup truncation works.
"""

from __future__ import annotations


class TimeAverage:
    """Time average of an integer step function (queue lengths)."""

    __slots__ = ("start_us", "last_us", "value", "area")

    def __init__(self, t0_us: int = 0):
        self.start_us = t0_us
        self.last_us = t0_us
        self.value = 0
        self.area = 0

    def set(self, now_us: int, value) -> None:
        self.area += self.value * (now_us - self.last_us)
        self.last_us = now_us
        self.value = value

    def add(self, now_us: int, delta) -> None:
        self.set(now_us, self.value + delta)

    def reset(self, now_us: int) -> None:
        self.start_us = now_us
        self.last_us = now_us
        self.area = 0

    def mean(self, end_us: int) -> float:
        span = end_us - self.start_us
        if span <= 0:
            return 0.0
        total = self.area + self.value * (end_us - self.last_us)
        return total / span


class AgeIntegral:
    """Time average of t - z(t) where z jumps at freshness events.

    Between events the age grows at slope 1 from (last - z), so each piece
    is a trapezoid; the doubled area keeps the arithmetic integral.
    """

    __slots__ = ("start_us", "last_us", "z_us", "area2")

    def __init__(self, t0_us: int = 0):
        self.start_us = t0_us
        self.last_us = t0_us
        self.z_us = t0_us
        self.area2 = 0

    def set_z(self, now_us: int, z_us: int) -> None:
        dt = now_us - self.last_us
        self.area2 += dt * ((self.last_us - self.z_us) + (now_us - self.z_us))
        self.last_us = now_us
        self.z_us = z_us

    def reset(self, now_us: int) -> None:
        self.start_us = now_us
        self.last_us = now_us
        self.area2 = 0

    def mean_seconds(self, end_us: int) -> float:
        span = end_us - self.start_us
        if span <= 0:
            return 0.0
        dt = end_us - self.last_us
        total2 = self.area2 + dt * ((self.last_us - self.z_us) + (end_us - self.z_us))
        return total2 / (2 * span) / 1e6
