"""Simulator driver around the contention kernel."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np

from ..errors import ConfigError, SimulationInvariantError
from ..observe import DecisionBatch
from . import kernel as K
from .config import SimConfig

ACTION_VALUES = (0, 1, 2, -1)  # -1 stands for the station's current CW
N_ACTIONS = 4
OUTCOME_NAMES = {K.OUT_SUCCESS: "success", K.OUT_COLLISION: "collision"}


def station_rng(seed: int, station_id: int) -> np.random.Generator:
    """Independent, reproducible stream per (seed, station)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(station_id,)))


class AgentPolicy(Protocol):
    def select(self, batch: DecisionBatch) -> np.ndarray:
        """Action indices (into ``ACTION_VALUES``) for ``batch.stations``."""


LEGACY = None  # policy handle for a BEB station


@dataclass
class SimTrace:
    """Post-warm-up transmission records and per-station counters."""

    config: SimConfig
    records: np.ndarray            # (k, 7) int64, kernel.R_* columns
    ratios: np.ndarray             # (k, 2) float64: backoff ratio at tx, max pending agent ratio
    is_agent: np.ndarray
    tx_attempts: np.ndarray
    successes: np.ndarray
    collisions: np.ndarray
    events: Optional[np.ndarray] = None   # (e, 3) int64: time, kind, station

    @property
    def bytes_delivered(self) -> np.ndarray:
        return self.successes * self.config.payload_bytes

    @property
    def measured_seconds(self) -> float:
        return self.config.sim_time - self.config.warmup

    def collision_fraction(self, stations=None) -> float:
        """Collisions per transmission attempt, pooled over ``stations``."""
        idx = slice(None) if stations is None else np.asarray(stations, dtype=int)
        att = int(np.sum(self.tx_attempts[idx]))
        return float(np.sum(self.collisions[idx])) / att if att else 0.0

    def throughput_mbps(self) -> np.ndarray:
        return self.bytes_delivered * 8 / self.measured_seconds / 1e6

    def aggregate_throughput_mbps(self) -> float:
        return float(self.bytes_delivered.sum() * 8 / self.measured_seconds / 1e6)

    def agent_backoff_ratios(self) -> np.ndarray:
        mask = self.is_agent[self.records[:, K.R_STATION]]
        return self.ratios[mask, 0]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["station_id", "start_us", "end_us", "outcome", "cw", "cum_backoff"])
            for row in self.records:
                w.writerow([int(row[K.R_STATION]), int(row[K.R_START]), int(row[K.R_END]),
                            OUTCOME_NAMES[int(row[K.R_OUTCOME])], int(row[K.R_CW]), int(row[K.R_CUM])])

    def summary(self) -> dict:
        return {
            "n_stations": self.config.n_stations,
            "agents": [int(i) for i in np.flatnonzero(self.is_agent)],
            "tx_attempts": self.tx_attempts.tolist(),
            "successes": self.successes.tolist(),
            "collisions": self.collisions.tolist(),
            "bytes_delivered": self.bytes_delivered.tolist(),
            "collision_fraction": self.collision_fraction(),
            "aggregate_throughput_mbps": self.aggregate_throughput_mbps(),
        }

    def write_summary(self, path) -> None:
        with open(path, "w") as fh:
            for key, value in self.summary().items():
                fh.write(f"{key} = {json.dumps(value)}\n")

    def fingerprint(self) -> bytes:
        parts = [self.records.tobytes(), self.ratios.tobytes(), self.tx_attempts.tobytes(),
                 self.successes.tobytes(), self.collisions.tobytes()]
        if self.events is not None:
            parts.append(self.events.tobytes())
        return b"".join(parts)


def read_summary(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            if line.strip():
                key, _, value = line.partition(" = ")
                out[key] = json.loads(value)
    return out


class Simulator:
    """One simulation run.  Drive it with :meth:`next_decision` /
    :meth:`apply_actions`, or let :func:`run` do it."""

    def __init__(self, config: SimConfig, agent_ids: Sequence[int] = (), seed: Optional[int] = None,
                 record_events: bool = False, rng_block: int = 2048):
        self.config = config.validate()
        n = config.n_stations
        agent_ids = sorted(set(int(i) for i in agent_ids))
        if any(i < 0 or i >= n for i in agent_ids):
            raise ConfigError(f"agent ids {agent_ids} out of range for {n} stations")
        self.seed = config.seed if seed is None else seed
        self.is_agent = np.zeros(n, dtype=bool)
        self.is_agent[agent_ids] = True
        self._rngs = [station_rng(self.seed, i) for i in range(n)]
        self._rng_block = rng_block

        p = np.zeros(K.P_NCOL, dtype=np.int64)
        p[K.P_SLOT] = config.slot
        p[K.P_SIFS] = config.sifs
        p[K.P_DIFS] = config.difs
        p[K.P_ACK] = config.ack_duration
        p[K.P_ACK_TIMEOUT] = config.ack_timeout
        p[K.P_AIRTIME] = config.airtime
        p[K.P_PAYLOAD] = config.payload_bytes
        p[K.P_CW_MIN] = config.cw_min
        p[K.P_CW_MAX] = config.cw_max
        p[K.P_WARMUP] = config.warmup_us
        p[K.P_END] = config.end_us
        p[K.P_JOIN_AFTER_COLL] = config.collision_join_slots
        p[K.P_LOG] = int(record_events)
        p[K.P_BUSY_SLOT] = int(config.busy_slot_countdown)
        self.p = p

        st = np.zeros((n, K.S_NCOL), dtype=np.int64)
        st[:, K.S_AGENT] = self.is_agent
        st[:, K.S_CW] = config.cw_min
        st[:, K.S_STEP] = -1
        for col in (K.S_LAST_ACK, K.S_LAST_TX, K.S_FAIL_T, K.S_PREV_FAIL_T):
            st[:, col] = -1
        self.st = st
        self.g = np.zeros(K.G_NCOL, dtype=np.int64)
        self.g[K.G_BUSY_WU] = -1
        self.g[K.G_PHASE] = K.PH_IDLE
        self.rand = np.stack([self._fresh(i, rng_block) for i in range(n)]) if n else np.zeros((0, rng_block), np.int64)
        cap = max(64, 8 * n)
        self.rec = np.zeros((cap, K.R_NCOL), dtype=np.int64)
        self.recf = np.zeros((cap, 2), dtype=np.float64)
        self.ev = np.zeros((max(64, 16 * n) if record_events else 1, 3), dtype=np.int64)

        # initial access: legacy stations draw, agents choose at the first DIFS end
        for i in range(n):
            if self.is_agent[i]:
                st[i, K.S_CTR] = -1
                st[i, K.S_NEED] = 1
            else:
                K._draw(st, self.rand, i)
        self._pending: Optional[DecisionBatch] = None
        self.done = False

    # -- kernel plumbing -------------------------------------------------
    def _fresh(self, i: int, size: int) -> np.ndarray:
        # 63-bit non-negative words; modulo a power-of-two window is exactly uniform
        return (self._rngs[i].bit_generator.random_raw(size) >> np.uint64(1)).astype(np.int64)

    def _refill(self, i: int) -> None:
        pos = int(self.st[i, K.S_RNG_POS])
        keep = self.rand[i, pos:].copy()
        self.rand[i, :len(keep)] = keep
        self.rand[i, len(keep):] = self._fresh(i, self._rng_block - len(keep))
        self.st[i, K.S_RNG_POS] = 0

    def _grow(self) -> None:
        n = self.config.n_stations
        if self.g[K.G_NREC] + n > self.rec.shape[0]:
            self.rec = np.concatenate([self.rec, np.zeros_like(self.rec)])
            self.recf = np.concatenate([self.recf, np.zeros_like(self.recf)])
        if self.p[K.P_LOG] and self.g[K.G_NEV] + 5 * n + 2 > self.ev.shape[0]:
            self.ev = np.concatenate([self.ev, np.zeros_like(self.ev)])

    def next_decision(self) -> Optional[DecisionBatch]:
        """Run until agents must act; ``None`` once the simulation is over."""
        if self._pending is not None:
            raise SimulationInvariantError("previous decision batch has not been answered")
        if self.done:
            return None
        while True:
            status = K.advance(self.st, self.g, self.p, self.rand, self.rec, self.recf, self.ev)
            if status == K.ST_DECIDE:
                self._pending = self._batch()
                return self._pending
            if status == K.ST_DONE:
                self.done = True
                return None
            if status == K.ST_NEED_RNG:
                for i in np.flatnonzero(~self.is_agent):
                    if self.st[i, K.S_RNG_POS] >= self._rng_block // 2:
                        self._refill(i)
            elif status == K.ST_NEED_SPACE:
                self._grow()
            else:
                raise SimulationInvariantError(f"kernel stopped with status {status}")

    @property
    def now(self) -> int:
        return int(self.g[K.G_DEC_T])

    def _batch(self) -> DecisionBatch:
        code = 1 if self.g[K.G_PHASE] == K.PH_AFTER_GRID else 2
        stations = np.flatnonzero(self.st[:, K.S_NEED] == code)
        return self.observe(stations)

    def observe(self, stations) -> DecisionBatch:
        n = self.config.n_stations
        self_obs = np.empty((n, 5), dtype=np.int64)
        pairs = np.empty((n, 2), dtype=np.int64)
        active = np.empty(n, dtype=np.bool_)
        K.observe(self.st, self.g, self.p, self_obs, pairs, active)
        return DecisionBatch(int(self.g[K.G_DEC_T]), np.asarray(stations, dtype=np.int64), self_obs, pairs,
                             active, self.is_agent)

    def apply_actions(self, actions, steps=None) -> None:
        """Install action indices for the pending batch's stations."""
        batch = self._pending
        if batch is None:
            raise SimulationInvariantError("no decision pending")
        actions = np.asarray(actions, dtype=np.int64)
        if actions.shape != batch.stations.shape:
            raise ValueError(f"expected {len(batch.stations)} actions, got {actions.shape}")
        if np.any((actions < 0) | (actions >= N_ACTIONS)):
            raise ValueError(f"action index out of range: {actions}")
        values = np.where(actions == 3, self.st[batch.stations, K.S_CW], actions)
        steps = np.full(len(actions), -1, dtype=np.int64) if steps is None else np.asarray(steps, dtype=np.int64)
        K.set_actions(self.st, batch.stations, values.astype(np.int64), steps)
        self._pending = None

    def trace(self) -> SimTrace:
        k = int(self.g[K.G_NREC])
        events = None
        if self.p[K.P_LOG]:
            events = self.ev[: int(self.g[K.G_NEV])].copy()
        return SimTrace(self.config, self.rec[:k].copy(), self.recf[:k].copy(), self.is_agent.copy(),
                        self.st[:, K.S_ATTEMPTS].copy(), self.st[:, K.S_SUCC].copy(),
                        self.st[:, K.S_COLL].copy(), events)


def run(config: SimConfig, policies: Optional[Sequence] = None, seed: Optional[int] = None,
        record_events: bool = False) -> SimTrace:
    """Simulate ``config`` to completion.

    ``policies`` holds one handle per station: ``LEGACY`` (``None``) for a BEB
    station or an :class:`AgentPolicy`.  Omitted means all legacy.
    """
    config.validate()
    n = config.n_stations
    if policies is None:
        policies = [LEGACY] * n
    if len(policies) != n:
        raise ConfigError(f"need one policy handle per station ({n}), got {len(policies)}")
    agent_ids = [i for i, pol in enumerate(policies) if pol is not LEGACY]
    sim = Simulator(config, agent_ids, seed=seed, record_events=record_events)
    while (batch := sim.next_decision()) is not None:
        actions = np.empty(len(batch.stations), dtype=np.int64)
        groups: dict[int, list[int]] = {}
        for k, i in enumerate(batch.stations):
            groups.setdefault(id(policies[i]), []).append(k)
        for ks in groups.values():
            pol = policies[batch.stations[ks[0]]]
            sub = DecisionBatch(batch.time, batch.stations[ks], batch.self_obs, batch.pairs,
                                batch.active, batch.is_agent)
            actions[ks] = pol.select(sub)
        sim.apply_actions(actions)
    return sim.trace()


@dataclass
class FixedActionPolicy:
    """Always picks the same action index."""

    action: int

    def select(self, batch: DecisionBatch) -> np.ndarray:
        return np.full(len(batch.stations), self.action, dtype=np.int64)


@dataclass
class RandomActionPolicy:
    seed: int = 0
    probs: Sequence[float] = (0.25, 0.25, 0.25, 0.25)
    rng: np.random.Generator = field(init=False)

    def __post_init__(self):
        self.rng = np.random.default_rng(self.seed)

    def select(self, batch: DecisionBatch) -> np.ndarray:
        return self.rng.choice(N_ACTIONS, size=len(batch.stations), p=self.probs)
