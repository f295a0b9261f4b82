"""Time-ordered event queue with a deterministic total order."""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional

from ..errors import SimulationInvariantError


class EventKind(IntEnum):
    # value = tie-break rank at equal timestamps
    TX_END = 0
    ACK_END = 1
    ACK_TIMEOUT = 2
    DEFER_END = 3
    SLOT_BOUNDARY = 4
    TX_START = 5
    ACK_START = 6


@dataclass(frozen=True, order=True)
class SimEvent:
    timestamp: int
    kind: EventKind
    station_id: int = -1
    payload: tuple = field(default=(), compare=False)

    def sort_key(self):
        return (self.timestamp, int(self.kind), self.station_id)


class EventQueue:
    def __init__(self):
        self._heap: list[tuple] = []
        self._last: Optional[tuple] = None

    def push(self, event: SimEvent) -> None:
        if self._last is not None and event.timestamp < self._last[0]:
            raise SimulationInvariantError(
                f"event at {event.timestamp} scheduled in the past (now {self._last[0]})")
        heapq.heappush(self._heap, (event.sort_key(), event))

    def pop(self) -> SimEvent:
        key, event = heapq.heappop(self._heap)
        if self._last is not None and key < self._last:
            raise SimulationInvariantError("event queue yielded out of order")
        self._last = key
        return event

    def peek(self) -> Optional[SimEvent]:
        return self._heap[0][1] if self._heap else None

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)
