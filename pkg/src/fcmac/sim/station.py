"""Per-station MAC state machine driven by individual events.

The fast kernel applies the same rules in bulk; this event-at-a-time form is
what the reference engine steps through.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Union

from ..errors import SimulationInvariantError
from .events import EventKind, SimEvent


@dataclass(frozen=True)
class StationState:
    id: int
    is_agent: bool = False
    cw: int = 15
    backoff_counter: int = 0
    cumulative_backoff: int = 0
    deferral_count: int = 0
    retry_stage: int = 0
    queue_len: int = 1
    # joined the countdown at a slot boundary of the current idle period
    armed: bool = False
    # backoff frozen by channel activity; agents re-select after DIFS
    deferred: bool = False


@dataclass(frozen=True)
class TxIntent:
    station_id: int
    timestamp: int


@dataclass(frozen=True)
class DecisionPoint:
    station_id: int
    timestamp: int


def advance_station(state: StationState, event: SimEvent, channel_busy: bool,
                    busy_slot_countdown: bool = False
                    ) -> tuple[StationState, Optional[Union[TxIntent, DecisionPoint]]]:
    """Apply one event to one station.

    Idle slot boundaries count down; the first boundary a station sees in an
    idle period only arms it.  A busy onset freezes an armed station and marks
    it deferred.  At the end of the following DIFS a deferred agent gets a
    decision point, and with ``busy_slot_countdown`` a deferred legacy station
    spends one count for the busy period.
    """
    kind = event.kind
    if kind == EventKind.SLOT_BOUNDARY:
        if channel_busy:
            return state, None
        if state.armed:
            if state.backoff_counter <= 0:
                raise SimulationInvariantError(
                    f"station {state.id}: backoff counter would drop below zero")
            state = replace(state, backoff_counter=state.backoff_counter - 1,
                            cumulative_backoff=state.cumulative_backoff + 1)
        else:
            state = replace(state, armed=True)
        if state.backoff_counter == 0:
            return state, TxIntent(state.id, event.timestamp)
        return state, None

    if kind == EventKind.TX_START and event.station_id != state.id:
        # busy onset: only a station already counting down is deferred
        if state.armed:
            state = replace(state, armed=False, deferred=True,
                            deferral_count=state.deferral_count + 1)
        return state, None

    if kind == EventKind.DEFER_END:
        if state.deferred and state.is_agent:
            return replace(state, deferred=False), DecisionPoint(state.id, event.timestamp)
        if state.deferred and busy_slot_countdown:
            if state.backoff_counter <= 0:
                raise SimulationInvariantError(
                    f"station {state.id}: deferred with an expired counter")
            return replace(state, deferred=False, backoff_counter=state.backoff_counter - 1,
                           cumulative_backoff=state.cumulative_backoff + 1), None
        return replace(state, deferred=False), None

    return state, None
