"""Agent observations: neighbor activity clocks (D2LT / CI2LA), self state,
and the global state assembled for the centralized critic.

All times are integer microseconds, so ``ci2la + busy_since_ack == d2lt``
holds exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import SimulationInvariantError
from .sim.events import EventKind, SimEvent

SELF_FIELDS = ("cw", "deferral_count", "cumulative_backoff", "since_failure", "idle_since_failure")
PAIR_FIELDS = ("d2lt", "ci2la")


@dataclass(frozen=True)
class SelfObservation:
    cw: int
    deferral_count: int
    cumulative_backoff: int
    since_failure: int
    idle_since_failure: int

    def as_tuple(self) -> tuple[int, ...]:
        return (self.cw, self.deferral_count, self.cumulative_backoff,
                self.since_failure, self.idle_since_failure)


@dataclass(frozen=True)
class LocalObservation:
    self_obs: SelfObservation
    neighbor_obs: tuple[tuple[int, int], ...]
    station_id: int = -1


@dataclass(frozen=True)
class GlobalState:
    agent_self_obs: tuple[SelfObservation, ...]
    legacy_obs: tuple[tuple[int, int], ...]


@dataclass
class NeighborTracker:
    """Overheard-activity clocks for every station in the BSS.

    Under perfect overhearing every station would hold identical copies, so
    one tracker serves all observers; an observer simply skips its own entry.
    """

    n_stations: int
    warmup: int = 0
    last_ack: list = field(default_factory=list)      # end of latest ACK, None if never
    busy_at_ack: list = field(default_factory=list)
    last_frame: list = field(default_factory=list)    # latest overheard frame start
    busy_total: int = 0
    busy_depth: int = 0
    busy_since: int = 0
    busy_at_warmup: Optional[int] = None
    now: int = 0

    def __post_init__(self):
        if not self.last_ack:
            self.last_ack = [None] * self.n_stations
            self.busy_at_ack = [0] * self.n_stations
            self.last_frame = [None] * self.n_stations

    def busy_until(self, t: int) -> int:
        """Cumulative busy time up to ``t`` (``t`` not before the last event)."""
        if self.busy_depth > 0:
            return self.busy_total + (t - self.busy_since)
        return self.busy_total

    def _cross_warmup(self, t: int) -> None:
        if self.busy_at_warmup is None and t >= self.warmup:
            self.busy_at_warmup = self.busy_until(self.warmup) if self.warmup >= self.now else self.busy_total

    def advance_to(self, t: int) -> None:
        if t < self.now:
            raise SimulationInvariantError(f"tracker moved backwards: {t} < {self.now}")
        self._cross_warmup(t)
        self.now = t

    def origin(self, now: int) -> tuple[int, int]:
        """Clock origin for stations never heard from, with busy time at it."""
        if now >= self.warmup:
            return self.warmup, (self.busy_at_warmup or 0)
        return 0, 0

    def d2lt(self, j: int, now: int) -> int:
        t = self.last_ack[j]
        if t is None:
            t = self.origin(now)[0]
        return now - t

    def busy_since_ack(self, j: int, now: int) -> int:
        ref = self.busy_at_ack[j] if self.last_ack[j] is not None else self.origin(now)[1]
        return self.busy_until(now) - ref

    def ci2la(self, j: int, now: int) -> int:
        return self.d2lt(j, now) - self.busy_since_ack(j, now)

    def is_active(self, j: int, now: int) -> bool:
        t = self.last_frame[j]
        return t is not None and t >= self.origin(now)[0]


def update_tracker(tracker: NeighborTracker, event: SimEvent, now: int) -> NeighborTracker:
    """Fold one channel event into ``tracker`` (in place; also returned)."""
    if event.timestamp != now:
        raise SimulationInvariantError("event timestamp and clock disagree")
    tracker.advance_to(now)
    kind = event.kind
    if kind in (EventKind.TX_START, EventKind.ACK_START):
        if tracker.busy_depth == 0:
            tracker.busy_since = now
        tracker.busy_depth += 1
        if kind == EventKind.TX_START and event.station_id >= 0:
            tracker.last_frame[event.station_id] = now
    elif kind in (EventKind.TX_END, EventKind.ACK_END):
        if tracker.busy_depth <= 0:
            raise SimulationInvariantError("busy period ended twice")
        tracker.busy_depth -= 1
        if tracker.busy_depth == 0:
            tracker.busy_total += now - tracker.busy_since
        if kind == EventKind.ACK_END:
            tracker.last_ack[event.station_id] = now
            tracker.busy_at_ack[event.station_id] = tracker.busy_total
    return tracker


def build_local_observation(station, trackers: NeighborTracker, now: int,
                            since_failure: int = 0, idle_since_failure: int = 0) -> LocalObservation:
    """Observation of ``station`` (a ``StationState``) at a decision point.

    ``since_failure`` / ``idle_since_failure`` are the station's failure clocks,
    which live with the simulator rather than the tracker.
    """
    self_obs = SelfObservation(station.cw, station.deferral_count, station.cumulative_backoff,
                               since_failure, idle_since_failure)
    neighbors = tuple((trackers.d2lt(j, now), trackers.ci2la(j, now))
                      for j in range(trackers.n_stations)
                      if j != station.id and trackers.is_active(j, now))
    return LocalObservation(self_obs, neighbors, station.id)


def build_global_state(all_local: Sequence[LocalObservation], legacy_trackers: NeighborTracker,
                       agent_ids: Sequence[int], now: int) -> GlobalState:
    if len(all_local) != len(agent_ids):
        raise ValueError(f"{len(all_local)} observations for {len(agent_ids)} agents")
    agents = set(agent_ids)
    legacy = tuple((legacy_trackers.d2lt(j, now), legacy_trackers.ci2la(j, now))
                   for j in range(legacy_trackers.n_stations) if j not in agents)
    return GlobalState(tuple(o.self_obs for o in all_local), legacy)


@dataclass
class DecisionBatch:
    """Everything observable when one or more agents must choose a backoff.

    Arrays cover every station; ``stations`` lists the ones deciding now.
    """

    time: int
    stations: np.ndarray
    self_obs: np.ndarray   # (n, 5) int64, SELF_FIELDS order
    pairs: np.ndarray      # (n, 2) int64, d2lt and ci2la
    active: np.ndarray     # (n,) bool
    is_agent: np.ndarray   # (n,) bool

    @property
    def agent_ids(self) -> np.ndarray:
        return np.flatnonzero(self.is_agent)

    def neighbor_ids(self, i: int) -> np.ndarray:
        ids = np.flatnonzero(self.active)
        return ids[ids != i]

    def local_observation(self, i: int) -> LocalObservation:
        nb = self.neighbor_ids(i)
        return LocalObservation(SelfObservation(*(int(v) for v in self.self_obs[i])),
                                tuple((int(a), int(b)) for a, b in self.pairs[nb]), int(i))

    def local_observations(self) -> list[LocalObservation]:
        return [self.local_observation(i) for i in self.stations]

    def global_state(self) -> GlobalState:
        agents = self.agent_ids
        return GlobalState(tuple(SelfObservation(*(int(v) for v in self.self_obs[i])) for i in agents),
                           tuple((int(a), int(b)) for a, b in self.pairs[~self.is_agent]))

    def actor_inputs(self, stations: Optional[np.ndarray] = None):
        """Padded raw features: self ``(k, 5)``, neighbors ``(k, L, 2)``, mask ``(k, L)``."""
        stations = self.stations if stations is None else np.asarray(stations)
        n = len(self.active)
        # neighbors of each row: active stations other than itself, in id order
        keep = self.active[None, :] & (np.arange(n)[None, :] != stations[:, None])
        order = np.argsort(~keep, axis=1, kind="stable")
        L = max(1, int(keep.sum(axis=1).max())) if len(stations) else 1
        order = order[:, :L]
        neigh = self.pairs[order]
        mask = np.take_along_axis(keep, order, axis=1)
        neigh[~mask] = 0
        return self.self_obs[stations], neigh, mask

    def critic_inputs(self):
        """Raw agent self features ``(m, 5)`` and legacy pairs ``(n - m, 2)``."""
        return self.self_obs[self.is_agent], self.pairs[~self.is_agent]
