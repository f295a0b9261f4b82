"""Constant-airtime PHY and slot resolution (no capture effect)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable


def frame_airtime(payload_bytes: int, data_rate: float, preamble: int) -> int:
    """Airtime in whole microseconds: ``preamble + ceil(8 * bytes / rate)``."""
    if data_rate <= 0:
        raise ValueError(f"data_rate must be positive, got {data_rate}")
    return int(preamble) + math.ceil(8 * payload_bytes / data_rate)


@dataclass(frozen=True)
class SlotOutcome:
    kind: str  # "idle" | "success" | "collision"
    stations: tuple[int, ...] = ()

    @property
    def station(self) -> int:
        if self.kind != "success":
            raise AttributeError("only a success has a single station")
        return self.stations[0]


def resolve_slot(transmitting: Iterable[int]) -> SlotOutcome:
    ids = tuple(sorted(set(transmitting)))
    if not ids:
        return SlotOutcome("idle")
    if len(ids) == 1:
        return SlotOutcome("success", ids)
    return SlotOutcome("collision", ids)
