"""PPO-clip updates on penalized rewards and the multiplier ascent step."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from torch import nn

from ..errors import TrainingError
from .buffer import TrajectoryBuffer
from .config import TrainConfig
from .gae import compute_gae, normalize_advantages
from .networks import Actor, Critic


@dataclass
class LagrangeState:
    lam: float = 0.01

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"lambda must be finite and >= 0, got {self.lam}")


def lambda_update(state: LagrangeState, violations, eta1: float) -> LagrangeState:
    """Projected ascent: ``max(0, lam + eta1 * sum(violations))``."""
    if eta1 <= 0:
        raise ValueError("eta1 must be > 0")
    total = float(np.sum(np.asarray(violations, dtype=np.float64)))
    return LagrangeState(max(0.0, state.lam + eta1 * total))


def clipped_surrogate(ratio: torch.Tensor, adv: torch.Tensor, clip: float) -> torch.Tensor:
    return torch.min(ratio * adv, torch.clamp(ratio, 1.0 - clip, 1.0 + clip) * adv)


@dataclass
class PreparedBatch:
    """Tensors for one update: samples (agent decisions) and steps."""

    own: torch.Tensor
    neigh: torch.Tensor
    mask: torch.Tensor
    action: torch.Tensor
    old_logp: torch.Tensor
    adv: torch.Tensor
    agents: torch.Tensor
    agent_mask: torch.Tensor
    legacy: torch.Tensor
    legacy_mask: torch.Tensor
    returns: torch.Tensor
    state_index: torch.Tensor      # step -> row of the per-instant state tensors

    @property
    def n_samples(self) -> int:
        return self.action.shape[0]

    @property
    def n_steps(self) -> int:
        return self.returns.shape[0]

    def sample_slice(self, idx) -> dict:
        return dict(own=self.own[idx], neigh=self.neigh[idx], mask=self.mask[idx], action=self.action[idx],
                    old_logp=self.old_logp[idx], adv=self.adv[idx])

    def step_slice(self, idx) -> dict:
        # steps taken at the same instant share a state: evaluate it once
        u, inverse = torch.unique(self.state_index[idx], return_inverse=True)
        return dict(agents=self.agents[u], agent_mask=self.agent_mask[u], legacy=self.legacy[u],
                    legacy_mask=self.legacy_mask[u], inverse=inverse, returns=self.returns[idx])


def prepare_batch(buffer: TrajectoryBuffer, actor: Actor, critic: Critic, lam: float, cfg: TrainConfig,
                  dtype=torch.float32) -> PreparedBatch:
    """Penalized rewards, GAE over steps, and old log-probabilities."""
    s = buffer.samples()
    st = buffer.states()
    as_t = lambda a: torch.as_tensor(a, dtype=dtype)
    agents, legacy = as_t(st["agents"]), as_t(st["legacy"])
    amask, lmask = torch.as_tensor(st["agent_mask"]), torch.as_tensor(st["legacy_mask"])
    own, neigh, mask = as_t(s["own"]), as_t(s["neigh"]), torch.as_tensor(s["mask"])
    action = torch.as_tensor(s["action"])
    with torch.no_grad():
        values = critic(agents, amask, legacy, lmask).double().numpy()[st["index"]] if buffer.T else np.zeros(0)
        old_logp = actor.distribution(own, neigh, mask).log_prob(action) if len(action) else torch.zeros(0)
    rewards = buffer.penalized_rewards(lam)
    step_adv = compute_gae(rewards, np.append(values, 0.0), cfg.gamma, cfg.gae_lambda)
    returns = step_adv + values
    adv = normalize_advantages(step_adv[s["step"]])
    return PreparedBatch(own, neigh, mask, action, old_logp.to(dtype), as_t(adv), agents, amask, legacy, lmask,
                         as_t(returns), torch.as_tensor(st["index"]))


def actor_loss(actor: Actor, mb: dict, clip: float, entropy_coef: float):
    dist = actor.distribution(mb["own"], mb["neigh"], mb["mask"])
    ratio = torch.exp(dist.log_prob(mb["action"]) - mb["old_logp"])
    surrogate = clipped_surrogate(ratio, mb["adv"], clip).mean()
    entropy = dist.entropy().mean()
    return -surrogate - entropy_coef * entropy, dict(entropy=float(entropy.detach()), clip_frac=float(
        ((ratio - 1).abs() > clip).float().mean()))


def critic_loss(critic: Critic, mb: dict, value_coef: float):
    v = critic(mb["agents"], mb["agent_mask"], mb["legacy"], mb["legacy_mask"])[mb["inverse"]]
    return value_coef * ((v - mb["returns"]) ** 2).mean()


def _dump_minibatch(path: Optional[Path], mb: dict) -> str:
    if path is None:
        return "no dump directory configured"
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    out = path / "nan_minibatch.npz"
    np.savez(out, **{k: v.detach().cpu().numpy() for k, v in mb.items()})
    return f"minibatch written to {out}"


def ppo_update(actor: Actor, critic: Critic, opt_actor, opt_critic, batch: PreparedBatch, cfg: TrainConfig,
               rng: np.random.Generator, dump_dir=None) -> dict:
    """``cfg.ppo_epochs`` passes of clipped-surrogate and value-regression steps."""
    n, T = batch.n_samples, batch.n_steps
    if n == 0 or T == 0:
        return dict(actor_loss=0.0, critic_loss=0.0, entropy=float("nan"), clip_frac=0.0)
    n_mb = max(1, int(np.ceil(n / cfg.minibatch_size)))
    stats = dict(actor_loss=0.0, critic_loss=0.0, entropy=0.0, clip_frac=0.0)
    count = 0
    for _ in range(cfg.ppo_epochs):
        sample_parts = np.array_split(rng.permutation(n), n_mb)
        step_parts = np.array_split(rng.permutation(T), n_mb)
        for sidx, tidx in zip(sample_parts, step_parts):
            smb = batch.sample_slice(torch.as_tensor(sidx))
            la, info = actor_loss(actor, smb, cfg.clip, cfg.entropy_coef)
            if not torch.isfinite(la):
                raise TrainingError(f"non-finite actor loss; {_dump_minibatch(dump_dir, smb)}")
            opt_actor.zero_grad()
            la.backward()
            nn.utils.clip_grad_norm_(actor.parameters(), cfg.max_grad_norm)
            opt_actor.step()

            tmb = batch.step_slice(torch.as_tensor(tidx))
            lc = critic_loss(critic, tmb, cfg.value_coef)
            if not torch.isfinite(lc):
                raise TrainingError(f"non-finite critic loss; {_dump_minibatch(dump_dir, tmb)}")
            opt_critic.zero_grad()
            lc.backward()
            nn.utils.clip_grad_norm_(critic.parameters(), cfg.max_grad_norm)
            opt_critic.step()

            stats["actor_loss"] += float(la.detach())
            stats["critic_loss"] += float(lc.detach())
            stats["entropy"] += info["entropy"]
            stats["clip_frac"] += info["clip_frac"]
            count += 1
    return {k: v / count for k, v in stats.items()}


def make_optimizers(actor: Actor, critic: Critic, cfg: TrainConfig):
    opt_a = torch.optim.Adam(actor.parameters(), lr=cfg.lr_actor, betas=(0.9, 0.999), eps=cfg.adam_eps)
    opt_c = torch.optim.Adam(critic.parameters(), lr=cfg.lr_critic, betas=(0.9, 0.999), eps=cfg.adam_eps)
    return opt_a, opt_c
