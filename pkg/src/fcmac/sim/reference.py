"""Slot-by-slot reference simulator.

Every idle slot boundary is a queued event and every station is stepped
through :func:`advance_station`; neighbor clocks come from the event-fed
:class:`NeighborTracker`.  Orders of magnitude slower than the kernel, it
exists to cross-check it: for the same configuration, policies and seed the
two must produce identical traces and decision batches.
"""
from __future__ import annotations

from dataclasses import replace
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ConfigError
from ..observe import DecisionBatch, NeighborTracker, update_tracker
from . import kernel as K
from .config import SimConfig
from .engine import LEGACY, SimTrace, station_rng
from .events import EventKind, EventQueue, SimEvent
from .phy import resolve_slot
from .station import DecisionPoint, StationState, TxIntent, advance_station


class ReferenceSimulator:
    def __init__(self, config: SimConfig, policies: Optional[Sequence] = None, seed: Optional[int] = None,
                 on_decision: Optional[Callable[[DecisionBatch, np.ndarray], None]] = None):
        self.cfg = config.validate()
        n = config.n_stations
        self.policies = list(policies) if policies is not None else [LEGACY] * n
        if len(self.policies) != n:
            raise ConfigError("need one policy handle per station")
        seed = config.seed if seed is None else seed
        self.rngs = [station_rng(seed, i) for i in range(n)]
        self.is_agent = np.array([pol is not LEGACY for pol in self.policies], dtype=bool)
        self.on_decision = on_decision
        self.warmup = config.warmup_us
        self.end = config.end_us
        self.tracker = NeighborTracker(n, warmup=self.warmup)
        self.queue = EventQueue()
        self.states = [StationState(i, bool(self.is_agent[i]), cw=config.cw_min) for i in range(n)]
        self.present = [True] * n           # False while waiting out an ACK timeout
        self.need_grid = [bool(a) for a in self.is_agent]
        self.step = [-1] * n
        self.fail_t = [None] * n
        self.busy_at_fail = [0] * n
        self.busy = False
        self.current_tx: list[int] = []
        self.records: list[tuple] = []
        self.ratios: list[tuple] = []
        self.events: list[tuple] = []
        self.attempts = np.zeros(n, dtype=np.int64)
        self.successes = np.zeros(n, dtype=np.int64)
        self.collisions = np.zeros(n, dtype=np.int64)
        for i in range(n):
            if not self.is_agent[i]:
                self._draw(i)

    def _draw(self, i: int) -> None:
        word = int(self.rngs[i].bit_generator.random_raw() >> 1)
        s = self.states[i]
        self.states[i] = replace(s, backoff_counter=word % (s.cw + 1))

    def _log(self, t, kind, sid):
        self.events.append((t, int(kind), sid))

    # -- observations ------------------------------------------------------
    def _batch(self, now: int, stations: list[int]) -> DecisionBatch:
        tr = self.tracker
        tr.advance_to(now)
        n = self.cfg.n_stations
        origin, busy_origin = tr.origin(now)
        busy = tr.busy_until(now)
        self_obs = np.zeros((n, 5), dtype=np.int64)
        pairs = np.zeros((n, 2), dtype=np.int64)
        active = np.zeros(n, dtype=bool)
        for j, s in enumerate(self.states):
            if self.fail_t[j] is None:
                since, ref = now - origin, busy_origin
            else:
                since, ref = now - self.fail_t[j], self.busy_at_fail[j]
            self_obs[j] = (s.cw, s.deferral_count, s.cumulative_backoff, since, since - (busy - ref))
            pairs[j] = (tr.d2lt(j, now), tr.ci2la(j, now))
            active[j] = tr.is_active(j, now)
        return DecisionBatch(now, np.array(sorted(stations), dtype=np.int64), self_obs, pairs, active,
                             self.is_agent.copy())

    def _decide(self, now: int, stations: list[int]) -> None:
        batch = self._batch(now, stations)
        actions = np.empty(len(batch.stations), dtype=np.int64)
        for k, i in enumerate(batch.stations):
            sub = DecisionBatch(now, batch.stations[k:k + 1], batch.self_obs, batch.pairs,
                                batch.active, batch.is_agent)
            actions[k] = self.policies[i].select(sub)[0]
        if self.on_decision is not None:
            self.on_decision(batch, actions)
        for i, a in zip(batch.stations, actions):
            s = self.states[i]
            value = s.cw if a == 3 else int(a)
            self.states[i] = replace(s, backoff_counter=value, armed=False)
            self.need_grid[i] = False
            self.step[i] = -1

    # -- event handlers ----------------------------------------------------
    def run(self, record_events: bool = False) -> SimTrace:
        self.queue.push(SimEvent(self.cfg.difs, EventKind.DEFER_END))
        while self.queue:
            ev = self.queue.pop()
            if ev.kind in (EventKind.DEFER_END, EventKind.SLOT_BOUNDARY) and ev.timestamp >= self.end:
                continue
            if ev.kind == EventKind.ACK_TIMEOUT:
                batch = [ev]
                while self.queue and self.queue.peek().kind == EventKind.ACK_TIMEOUT \
                        and self.queue.peek().timestamp == ev.timestamp:
                    batch.append(self.queue.pop())
                self._on_ack_timeout(ev.timestamp, [e.station_id for e in batch])
                continue
            update_tracker(self.tracker, ev, ev.timestamp)
            getattr(self, "_on_" + ev.kind.name.lower())(ev)
        k = len(self.records)
        rec = np.array(self.records, dtype=np.int64).reshape(k, K.R_NCOL)
        ratios = np.array(self.ratios, dtype=np.float64).reshape(k, 2)
        events = None
        if record_events:
            events = np.array(self.events, dtype=np.int64).reshape(-1, 3)
        return SimTrace(self.cfg, rec, ratios, self.is_agent.copy(), self.attempts, self.successes,
                        self.collisions, events)

    def _on_defer_end(self, ev: SimEvent) -> None:
        t = ev.timestamp
        self._log(t, EventKind.DEFER_END, -1)
        deciders = [i for i in range(len(self.states)) if self.need_grid[i]]
        for i, s in enumerate(self.states):
            s, out = advance_station(s, ev, False, self.cfg.busy_slot_countdown)
            self.states[i] = s
            if isinstance(out, DecisionPoint):
                deciders.append(i)
        if deciders:
            self._decide(t, sorted(set(deciders)))
        self.queue.push(SimEvent(t, EventKind.SLOT_BOUNDARY))

    def _on_slot_boundary(self, ev: SimEvent) -> None:
        t = ev.timestamp
        intents = []
        for i, s in enumerate(self.states):
            if not self.present[i] or self.need_grid[i]:
                continue
            s, out = advance_station(s, ev, False)
            self.states[i] = s
            if isinstance(out, TxIntent):
                intents.append(i)
        if not intents:
            self.queue.push(SimEvent(t + self.cfg.slot, EventKind.SLOT_BOUNDARY))
            return
        outcome = resolve_slot(intents)
        start = SimEvent(t, EventKind.TX_START, intents[0])
        for i, s in enumerate(self.states):
            if i not in intents:
                self.states[i], _ = advance_station(s, start, True)
        self.busy = True
        self.current_tx = list(outcome.stations)
        post = t >= self.warmup
        max_ratio = 0.0
        for i, s in enumerate(self.states):
            if self.is_agent[i]:
                max_ratio = max(max_ratio, s.cumulative_backoff / s.cw)
        end = t + self.cfg.airtime
        code = K.OUT_SUCCESS if outcome.kind == "success" else K.OUT_COLLISION
        for i in self.current_tx:
            s = self.states[i]
            if post:
                self.records.append((i, t, end, code, s.cw, s.cumulative_backoff,
                                     self.step[i] if self.is_agent[i] else -1))
                self.ratios.append((s.cumulative_backoff / s.cw, max_ratio))
                self.attempts[i] += 1
            self.queue.push(SimEvent(t, EventKind.TX_START, i))
            self.queue.push(SimEvent(end, EventKind.TX_END, i))

    def _on_tx_start(self, ev: SimEvent) -> None:
        self._log(ev.timestamp, EventKind.TX_START, ev.station_id)

    def _on_tx_end(self, ev: SimEvent) -> None:
        t, i = ev.timestamp, ev.station_id
        self._log(t, EventKind.TX_END, i)
        post = t - self.cfg.airtime >= self.warmup
        s = self.states[i]
        if len(self.current_tx) == 1:
            self.queue.push(SimEvent(t + self.cfg.sifs, EventKind.ACK_START, i))
            return
        if post:
            self.collisions[i] += 1
        self.states[i] = replace(s, cw=min(2 * (s.cw + 1) - 1, self.cfg.cw_max), retry_stage=s.retry_stage + 1,
                                 cumulative_backoff=0, deferral_count=0, armed=False, deferred=False,
                                 backoff_counter=0)
        self.present[i] = False
        self.step[i] = -1
        t_fail = t + self.cfg.ack_timeout
        self._log(t_fail, EventKind.ACK_TIMEOUT, i)
        self.queue.push(SimEvent(t_fail, EventKind.ACK_TIMEOUT, i))
        if i == self.current_tx[-1]:
            self.busy = False
            self.current_tx = []
            self.queue.push(SimEvent(t + self.cfg.difs, EventKind.DEFER_END))

    def _on_ack_start(self, ev: SimEvent) -> None:
        self._log(ev.timestamp, EventKind.ACK_START, ev.station_id)
        self.queue.push(SimEvent(ev.timestamp + self.cfg.ack_duration, EventKind.ACK_END, ev.station_id))

    def _on_ack_end(self, ev: SimEvent) -> None:
        t, i = ev.timestamp, ev.station_id
        self._log(t, EventKind.ACK_END, i)
        start = t - self.cfg.ack_duration - self.cfg.sifs - self.cfg.airtime
        if start >= self.warmup:
            self.successes[i] += 1
        s = self.states[i]
        self.states[i] = replace(s, cw=self.cfg.cw_min, retry_stage=0, cumulative_backoff=0,
                                 deferral_count=0, armed=False, deferred=False, backoff_counter=0)
        self.step[i] = -1
        if self.is_agent[i]:
            self.need_grid[i] = True
        else:
            self._draw(i)
        self.busy = False
        self.current_tx = []
        self.queue.push(SimEvent(t + self.cfg.difs, EventKind.DEFER_END))

    def _on_ack_timeout(self, t: int, stations: list[int]) -> None:
        self.tracker.advance_to(t)
        busy_now = self.tracker.busy_until(t)
        agents = []
        for i in stations:
            self.fail_t[i] = t
            self.busy_at_fail[i] = busy_now
            self.present[i] = True
            if self.is_agent[i]:
                agents.append(i)
            else:
                self._draw(i)
        if not agents:
            return
        if not self.busy and t < self.end:
            for i in agents:
                self.need_grid[i] = False
            self._decide(t, agents)
        else:
            for i in agents:
                self.need_grid[i] = True


def run_reference(config: SimConfig, policies: Optional[Sequence] = None, seed: Optional[int] = None,
                  record_events: bool = False, on_decision=None) -> SimTrace:
    return ReferenceSimulator(config, policies, seed, on_decision).run(record_events)
