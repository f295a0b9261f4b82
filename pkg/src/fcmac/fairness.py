"""Backoff-ratio fairness: the ratio itself, the stepwise constraint penalty,
the cooperative reward and the penalized reward fed to the trainer."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FAIR_RATIO = 0.5
COLLISION_REWARD = -2.0


def backoff_ratio(cumulative_backoff: int, cw: int) -> float:
    if cw <= 0:
        raise ValueError(f"cw must be >= 1, got {cw}")
    if cumulative_backoff < 0:
        raise ValueError("cumulative_backoff must be >= 0")
    return cumulative_backoff / cw


def constraint_penalty(transmitted: bool, ratio: float = 0.0, T: int = 0, T_s: int = 0) -> float:
    if not transmitted:
        return 0.0
    if T_s <= 0:
        raise ValueError("a transmitting step needs T_s >= 1")
    if T < T_s:
        raise ValueError(f"T ({T}) must be >= T_s ({T_s})")
    return (T / T_s) * (FAIR_RATIO - ratio)


def reward(outcome: str, ratio_at_tx: float = 0.0, max_pending_ratio: float = 0.0) -> float:
    """Per-agent reward for the result of one action.

    ``outcome`` is ``"success"``, ``"collision"`` (transmitted, no ACK) or
    ``"none"``.  A success scores the transmitter's ratio relative to the
    largest pending ratio among agents.  When every agent's pending ratio is
    zero the transmitter ties for the maximum and scores 1.
    """
    if outcome == "collision":
        return COLLISION_REWARD
    if outcome == "none":
        return 0.0
    if outcome != "success":
        raise ValueError(f"unknown outcome {outcome!r}")
    if max_pending_ratio < 0 or ratio_at_tx < 0:
        raise ValueError("ratios must be non-negative")
    if ratio_at_tx > max_pending_ratio:
        raise ValueError(
            f"transmitter ratio {ratio_at_tx} exceeds the max pending ratio {max_pending_ratio}")
    if max_pending_ratio == 0.0:
        return 1.0
    return ratio_at_tx / max_pending_ratio


def penalized_reward(r, penalties, lam: float):
    """``r - lam * sum(penalties)``; works on scalars or on a step axis
    (``penalties`` shaped ``(T, m)`` against ``r`` shaped ``(T,)``)."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    c = np.asarray(penalties, dtype=np.float64)
    total = c.sum(axis=-1) if c.ndim else c
    out = np.asarray(r, dtype=np.float64) - lam * total
    return float(out) if out.ndim == 0 else out


@dataclass
class EpisodeLedger:
    """Per-agent transmission log for one episode.

    Transmissions are keyed by the trajectory step whose action produced them;
    penalties need the final ``T`` and ``T_s`` so they are only available after
    :meth:`close`.
    """

    n_agents: int
    step_count: int = 0
    tx_steps: list[list[int]] = field(default_factory=list)
    backoff_ratios: list[list[float]] = field(default_factory=list)
    rewards: list[list[float]] = field(default_factory=list)
    closed: bool = False

    def __post_init__(self):
        if not self.tx_steps:
            self.tx_steps = [[] for _ in range(self.n_agents)]
            self.backoff_ratios = [[] for _ in range(self.n_agents)]
            self.rewards = [[] for _ in range(self.n_agents)]

    def record_tx(self, agent: int, step: int, ratio: float, r: float) -> None:
        if self.closed:
            raise RuntimeError("ledger already closed")
        if self.tx_steps[agent] and step <= self.tx_steps[agent][-1]:
            raise ValueError("transmissions must arrive in step order, one per step")
        self.tx_steps[agent].append(step)
        self.backoff_ratios[agent].append(ratio)
        self.rewards[agent].append(r)

    def transmissions(self, agent: int) -> int:
        return len(self.tx_steps[agent])

    def close(self, step_count: int) -> "EpisodeLedger":
        for steps in self.tx_steps:
            if steps and steps[-1] >= step_count:
                raise ValueError("transmission recorded past the final step")
        self.step_count = step_count
        self.closed = True
        return self

    def penalty_matrix(self) -> np.ndarray:
        """``(T, m)`` array of stepwise penalties."""
        if not self.closed:
            raise RuntimeError("close the ledger before computing penalties")
        T = self.step_count
        c = np.zeros((T, self.n_agents))
        for i in range(self.n_agents):
            ts = self.transmissions(i)
            for step, ratio in zip(self.tx_steps[i], self.backoff_ratios[i]):
                c[step, i] = constraint_penalty(True, ratio, T, ts)
        return c

    def reward_vector(self) -> np.ndarray:
        """Cooperative reward per step: the sum of agents' rewards at that step."""
        r = np.zeros(self.step_count)
        for i in range(self.n_agents):
            for step, ri in zip(self.tx_steps[i], self.rewards[i]):
                r[step] += ri
        return r

    def mean_backoff_ratio(self, agent: int | None = None) -> float:
        ratios = self.backoff_ratios[agent] if agent is not None else [
            b for per in self.backoff_ratios for b in per]
        return float(np.mean(ratios)) if ratios else float("nan")

    def csv_rows(self, episode: int) -> list[dict]:
        rows = []
        for i in range(self.n_agents):
            ts = self.transmissions(i)
            rows.append({
                "episode": episode,
                "agent": i,
                "T": self.step_count,
                "T_s": ts,
                "mean_backoff_ratio": self.mean_backoff_ratio(i) if ts else float("nan"),
                "mean_reward": float(np.mean(self.rewards[i])) if ts else float("nan"),
                "violation": episode_violation(self, i),
            })
        return rows


LEDGER_CSV_FIELDS = ["episode", "agent", "T", "T_s", "mean_backoff_ratio", "mean_reward", "violation"]


def write_ledger_csv(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LEDGER_CSV_FIELDS)
        w.writeheader()
        w.writerows(rows)


def episode_violation(ledger: EpisodeLedger, agent: int) -> float:
    """Mean stepwise penalty of ``agent`` over the episode."""
    if ledger.transmissions(agent) == 0 or ledger.step_count == 0:
        return 0.0
    return float(ledger.penalty_matrix()[:, agent].sum() / ledger.step_count)
