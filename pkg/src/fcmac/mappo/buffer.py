"""Trajectory storage for one episode."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..fairness import EpisodeLedger, penalized_reward


@dataclass
class TrajectoryBuffer:
    """One episode of decisions.

    A step is one agent's decision point.  Agents deciding at the same
    instant become consecutive steps in station order and share the global
    state snapshot taken at that instant.  Per-sample arrays (one row per
    agent decision) and per-step arrays are kept separately; with one sample
    per step they line up one to one.  Global states are stored once per
    instant and steps point at them.  Rewards and
    penalties live in the ledger, so penalized rewards are always rebuilt from
    the current multiplier.
    """

    n_stations: int
    agent_ids: np.ndarray
    # per sample
    sample_step: list = field(default_factory=list)
    sample_agent: list = field(default_factory=list)
    own: list = field(default_factory=list)
    neigh: list = field(default_factory=list)
    neigh_mask: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    # per step
    step_time: list = field(default_factory=list)
    step_state: list = field(default_factory=list)
    # per decision instant
    agents_obs: list = field(default_factory=list)
    legacy_obs: list = field(default_factory=list)
    ledger: EpisodeLedger = None
    closed: bool = False

    def __post_init__(self):
        self.agent_ids = np.asarray(self.agent_ids, dtype=np.int64)
        if self.ledger is None:
            self.ledger = EpisodeLedger(len(self.agent_ids))
        self._slot = {int(a): k for k, a in enumerate(self.agent_ids)}

    @property
    def n_agents(self) -> int:
        return len(self.agent_ids)

    @property
    def max_neighbors(self) -> int:
        return max(1, self.n_stations - 1)

    def agent_index(self, station: int) -> int:
        return self._slot[int(station)]

    def add_step(self, time, stations, own, neigh, mask, actions, agents_obs, legacy_obs) -> int:
        """Append the decisions of one instant; returns the first step index
        (the k-th station in ``stations`` gets step ``t + k``)."""
        t = len(self.step_time)
        L = self.max_neighbors
        k = len(stations)
        pad = np.zeros((k, L, 2), dtype=np.float64)
        pmask = np.zeros((k, L), dtype=bool)
        w = min(L, neigh.shape[1])
        pad[:, :w] = neigh[:, :w]
        pmask[:, :w] = mask[:, :w]
        self.sample_step.extend(range(t, t + k))
        self.sample_agent.extend(int(s) for s in stations)
        self.own.append(np.asarray(own, dtype=np.float64))
        self.neigh.append(pad)
        self.neigh_mask.append(pmask)
        self.actions.append(np.asarray(actions, dtype=np.int64))
        self.step_time.extend([int(time)] * k)
        self.step_state.extend([len(self.agents_obs)] * k)
        self.agents_obs.append(np.asarray(agents_obs, dtype=np.float64))
        self.legacy_obs.append(np.asarray(legacy_obs, dtype=np.float64))
        return t

    @property
    def T(self) -> int:
        return len(self.step_time)

    def close(self) -> "TrajectoryBuffer":
        self.ledger.close(self.T)
        self.closed = True
        return self

    def samples(self) -> dict:
        """Stacked per-sample arrays."""
        if not self.actions:
            return dict(step=np.zeros(0, np.int64), agent=np.zeros(0, np.int64), own=np.zeros((0, 5)),
                        neigh=np.zeros((0, self.max_neighbors, 2)),
                        mask=np.zeros((0, self.max_neighbors), bool), action=np.zeros(0, np.int64))
        return dict(step=np.asarray(self.sample_step, dtype=np.int64),
                    agent=np.asarray(self.sample_agent, dtype=np.int64),
                    own=np.concatenate(self.own), neigh=np.concatenate(self.neigh),
                    mask=np.concatenate(self.neigh_mask), action=np.concatenate(self.actions))

    def states(self) -> dict:
        """Critic inputs per decision instant, padded to ``max(m, 1)`` agents
        and ``max(n - m, 1)`` legacy stations, plus the step -> instant index."""
        T, n, m = len(self.agents_obs), self.n_stations, self.n_agents
        agents = np.zeros((T, max(m, 1), 5))
        amask = np.zeros((T, max(m, 1)), dtype=bool)
        legacy = np.zeros((T, max(n - m, 1), 2))
        lmask = np.zeros((T, max(n - m, 1)), dtype=bool)
        if T:
            agents[:, :m] = np.stack(self.agents_obs)
            amask[:, :m] = True
            if n > m:
                legacy[:, : n - m] = np.stack(self.legacy_obs)
                lmask[:, : n - m] = True
        return dict(agents=agents, agent_mask=amask, legacy=legacy, legacy_mask=lmask,
                    index=np.asarray(self.step_state, dtype=np.int64))

    def rewards(self) -> np.ndarray:
        return self.ledger.reward_vector()

    def penalties(self) -> np.ndarray:
        return self.ledger.penalty_matrix()

    def penalized_rewards(self, lam: float) -> np.ndarray:
        if not self.closed:
            raise RuntimeError("close the buffer before computing penalized rewards")
        return penalized_reward(self.rewards(), self.penalties(), lam)
