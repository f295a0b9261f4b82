"""Episode rollouts with a frozen policy snapshot."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..fairness import reward
from ..observe import DecisionBatch
from ..sim import kernel as K
from ..sim.config import SimConfig
from ..sim.engine import SimTrace, Simulator
from .buffer import TrajectoryBuffer
from .networks import FeatureScales, NumpyActor


def sample_actions(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row (inverse CDF on a single uniform)."""
    u = rng.random(len(probs))[:, None]
    idx = (probs.cumsum(axis=1) < u).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


@dataclass
class LearnedPolicy:
    """Agent policy backed by a trained actor, for evaluation runs."""

    actor: NumpyActor
    scales: FeatureScales
    rng: np.random.Generator

    def select(self, batch: DecisionBatch) -> np.ndarray:
        own, neigh, mask = batch.actor_inputs()
        probs = self.actor.probs(self.scales.normalize_self(own), self.scales.normalize_pairs(neigh), mask)
        return sample_actions(probs, self.rng)


def attribute_rewards(buffer: TrajectoryBuffer, trace: SimTrace) -> None:
    """Score every agent transmission and book it at the step of the decision
    that produced it."""
    rec, ratios = trace.records, trace.ratios
    is_agent = trace.is_agent[rec[:, K.R_STATION]]
    keep = np.flatnonzero(is_agent & (rec[:, K.R_STEP] >= 0))
    for k in keep:
        outcome = "success" if rec[k, K.R_OUTCOME] == K.OUT_SUCCESS else "collision"
        r = reward(outcome, ratios[k, 0], ratios[k, 1])
        buffer.ledger.record_tx(buffer.agent_index(rec[k, K.R_STATION]), int(rec[k, K.R_STEP]),
                                float(ratios[k, 0]), r)


def rollout(actor: NumpyActor, scales: FeatureScales, config: SimConfig, agent_ids: Sequence[int], seed: int,
            rng: np.random.Generator) -> tuple[TrajectoryBuffer, SimTrace]:
    """Simulate one episode; decisions from the end of warm-up on become steps."""
    sim = Simulator(config, agent_ids, seed=seed)
    buf = TrajectoryBuffer(config.n_stations, sorted(agent_ids))
    warmup = config.warmup_us
    while (batch := sim.next_decision()) is not None:
        own, neigh, mask = batch.actor_inputs()
        own_n, neigh_n = scales.normalize_self(own), scales.normalize_pairs(neigh)
        actions = sample_actions(actor.probs(own_n, neigh_n, mask), rng)
        if batch.time >= warmup:
            agents, legacy = batch.critic_inputs()
            t = buf.add_step(batch.time, batch.stations, own_n, neigh_n, mask, actions,
                             scales.normalize_self(agents), scales.normalize_pairs(legacy))
            steps = t + np.arange(len(actions), dtype=np.int64)
        else:
            steps = None
        sim.apply_actions(actions, steps)
    trace = sim.trace()
    attribute_rewards(buf, trace)
    return buf.close(), trace


TRAJECTORY_FIELDS = ["t", "agent", "action", "reward", "penalty"]


def write_trajectory_csv(path, buffer: TrajectoryBuffer) -> None:
    """Per-decision debug dump: step, station, action, own reward and penalty
    booked at that step."""
    s = buffer.samples()
    c = buffer.penalties()
    own_r = {}
    for i in range(buffer.n_agents):
        for step, r in zip(buffer.ledger.tx_steps[i], buffer.ledger.rewards[i]):
            own_r[(step, i)] = r
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_FIELDS)
        for t, station, a in zip(s["step"], s["agent"], s["action"]):
            i = buffer.agent_index(station)
            w.writerow([int(t), int(station), int(a), own_r.get((int(t), i), 0.0), float(c[t, i])])
