"""Event queue with deterministic (time, seq) dispatch order."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Any


class EventKind(str, Enum):
    JOB_START = "JobStart"
    STEP_COMPLETE = "StepComplete"
    WRITE_COMPLETE = "WriteComplete"
    STAGE_COMPLETE = "StageComplete"
    REBOOT_COMPLETE = "RebootComplete"
    POWER_LOSS = "PowerLoss"
    JOB_END = "JobEnd"


@dataclass(frozen=True, order=True)
class Event:
    time: float
    seq: int
    kind: EventKind = field(compare=False)
    subject: str | None = field(default=None, compare=False)
    data: dict[str, Any] = field(default_factory=dict, compare=False, hash=False)


class EventQueue:
    """Min-heap of events. Simultaneous events dispatch in insertion order."""

    def __init__(self):
        self._heap: list[Event] = []
        self._seq = 0
        self.now = 0.0
        self.pushed: list[Event] = []
        self.dispatched: list[Event] = []

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, time: float, kind: EventKind, subject: str | None = None, **data) -> Event:
        if time < self.now:
            raise ValueError(f"cannot schedule {kind.value} at {time} before now={self.now}")
        ev = Event(float(time), self._seq, kind, subject, data)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        self.pushed.append(ev)
        return ev

    def peek_time(self) -> float | None:
        return self._heap[0].time if self._heap else None

    def pop(self) -> Event:
        ev = heapq.heappop(self._heap)
        self.now = ev.time
        self.dispatched.append(ev)
        return ev
