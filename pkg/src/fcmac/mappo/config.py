"""Trainer hyperparameters."""
from __future__ import annotations

from dataclasses import asdict, dataclass

from ..errors import ConfigError


@dataclass
class TrainConfig:
    gamma: float = 0.98
    gae_lambda: float = 0.95
    ppo_epochs: int = 6
    clip: float = 0.2
    lambda_init: float = 0.01
    lr_lambda: float = 1e-4
    lr_actor: float = 3e-4
    lr_critic: float = 1e-2
    episodes: int = 100
    minibatch_size: int = 2048
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    max_grad_norm: float = 0.5
    adam_eps: float = 1e-8
    checkpoint_every: int = 10
    randomize_agents: bool = True
    # agent count when not randomized
    n_agents: int = 0
    dump_trajectories: bool = False

    def validate(self) -> "TrainConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(0.0 <= self.gamma < 1.0, "gamma must lie in [0, 1)")
        need(0.0 <= self.gae_lambda <= 1.0, "gae_lambda must lie in [0, 1]")
        need(self.clip > 0, "clip must be > 0")
        need(self.ppo_epochs >= 1, "ppo_epochs must be >= 1")
        need(self.lambda_init >= 0, "lambda_init must be >= 0")
        for name in ("lr_lambda", "lr_actor", "lr_critic"):
            need(getattr(self, name) > 0, f"{name} must be > 0")
        need(self.episodes >= 0, "episodes must be >= 0")
        need(self.minibatch_size >= 1, "minibatch_size must be >= 1")
        need(self.checkpoint_every >= 1, "checkpoint_every must be >= 1")
        need(self.n_agents >= 0, "n_agents must be >= 0")
        return self

    def to_dict(self) -> dict:
        return asdict(self)
