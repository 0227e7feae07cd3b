"""Event loop: a heap of (time, insertion counter, thunk).

The counter breaks time ties in insertion order, which makes every run
with the same inputs replay the exact same event sequence.
"""

from __future__ import annotations

import heapq


class EventLoop:
    __slots__ = ("now_us", "_heap", "_count")

    def __init__(self, start_us: int = 0):
        self.now_us = start_us
        self._heap: list = []
        self._count = 0

    def schedule(self, at_us: int, fn) -> None:
        if at_us < self.now_us:
            raise ValueError(
                f"cannot schedule at {at_us}, clock is already at {self.now_us}"
            )
        self._count += 1
        heapq.heappush(self._heap, (at_us, self._count, fn))

    def run_until(self, end_us: int) -> None:
        """Execute events with time < end_us, then set the clock to end_us.

        The interval is half-open so back-to-back calls never process an
        event twice and statistics can integrate cleanly up to end_us.
        """
        heap = self._heap
        pop = heapq.heappop
        while heap and heap[0][0] < end_us:
            t, _, fn = pop(heap)
            self.now_us = t
            fn()
        self.now_us = end_us

    def pending(self) -> int:
        return len(self._heap)
