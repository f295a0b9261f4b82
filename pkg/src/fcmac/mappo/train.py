"""Training loop: rollout, penalized-reward PPO update, multiplier ascent."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from ..errors import TrainingError
from ..fairness import episode_violation
from ..sim.config import SimConfig
from .checkpoint import Checkpoint, save_checkpoint
from .config import TrainConfig
from .networks import Actor, Critic, FeatureScales, NumpyActor
from .ppo import LagrangeState, lambda_update, make_optimizers, ppo_update, prepare_batch
from .rollout import rollout, write_trajectory_csv

log = logging.getLogger(__name__)

METRICS_FIELDS = ["episode", "m", "mean_reward_per_tx", "mean_backoff_ratio", "lambda", "collision_rate",
                  "throughput_mbps", "wall_seconds"]


def episode_seed(seed: int, episode: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(episode,)).generate_state(1, np.uint32)[0])


@dataclass
class TrainResult:
    actor: Actor
    critic: Critic
    lagrange: LagrangeState
    scales: FeatureScales
    metrics: list = field(default_factory=list)
    checkpoint: Optional[Path] = None


def train(cfg: TrainConfig, sim_config: SimConfig, out_dir=None, seed: int = 0) -> TrainResult:
    cfg.validate()
    sim_config.validate()
    n = sim_config.n_stations
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    actor, critic = Actor(), Critic()
    opt_a, opt_c = make_optimizers(actor, critic, cfg)
    scales = FeatureScales.for_config(sim_config.cw_max)
    lag = LagrangeState(cfg.lambda_init)
    result = TrainResult(actor, critic, lag, scales)
    out = Path(out_dir) if out_dir is not None else None
    writer = fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        fh = open(out / "metrics.csv", "w", newline="")
        writer = csv.DictWriter(fh, fieldnames=METRICS_FIELDS)
        writer.writeheader()
    start = time.perf_counter()
    try:
        for ep in range(cfg.episodes):
            if cfg.randomize_agents:
                m = int(rng.integers(1, n + 1))
            else:
                m = cfg.n_agents or n
            agent_ids = sorted(int(i) for i in rng.choice(n, size=m, replace=False))
            buf, trace = rollout(NumpyActor(actor), scales, sim_config, agent_ids, episode_seed(seed, ep), rng)
            batch = prepare_batch(buf, actor, critic, lag.lam, cfg)
            stats = ppo_update(actor, critic, opt_a, opt_c, batch, cfg, rng, dump_dir=out)
            violations = [episode_violation(buf.ledger, i) for i in range(m)]
            lag = lambda_update(lag, violations, cfg.lr_lambda)
            if not math.isfinite(lag.lam):
                raise TrainingError(f"multiplier diverged at episode {ep}")
            ledger = buf.ledger
            rewards = [r for per in ledger.rewards for r in per]
            row = dict(episode=ep, m=m,
                       mean_reward_per_tx=float(np.mean(rewards)) if rewards else float("nan"),
                       mean_backoff_ratio=ledger.mean_backoff_ratio(),
                       **{"lambda": lag.lam},
                       collision_rate=trace.collision_fraction(agent_ids),
                       throughput_mbps=trace.aggregate_throughput_mbps(),
                       wall_seconds=time.perf_counter() - start)
            result.metrics.append(row)
            log.info("episode %d m=%d steps=%d ratio=%.3f reward=%.3f lambda=%.5f coll=%.3f",
                     ep, m, buf.T, row["mean_backoff_ratio"], row["mean_reward_per_tx"], lag.lam,
                     row["collision_rate"])
            if writer is not None:
                writer.writerow(row)
                fh.flush()
                if cfg.dump_trajectories:
                    write_trajectory_csv(out / f"trajectory_{ep:04d}.csv", buf)
                if (ep + 1) % cfg.checkpoint_every == 0 or ep + 1 == cfg.episodes:
                    result.checkpoint = save_checkpoint(
                        out / "checkpoint.npz",
                        Checkpoint(actor, critic, scales, lag.lam, ep + 1, sim_config.digest(),
                                   meta=dict(seed=seed, train=cfg.to_dict())))
            del stats
    finally:
        if fh is not None:
            fh.close()
    result.lagrange = lag
    return result
