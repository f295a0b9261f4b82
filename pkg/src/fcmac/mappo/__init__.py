"""Fairness-constrained multi-agent PPO."""
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import TrainConfig
from .gae import compute_gae, normalize_advantages
from .networks import Actor, Critic, FeatureScales, NumpyActor
from .ppo import LagrangeState, lambda_update, ppo_update, prepare_batch
from .rollout import LearnedPolicy, rollout
from .train import METRICS_FIELDS, TrainResult, train

__all__ = [
    "Actor", "Checkpoint", "Critic", "FeatureScales", "LagrangeState", "LearnedPolicy", "METRICS_FIELDS",
    "NumpyActor", "TrainConfig", "TrainResult", "compute_gae", "lambda_update", "load_checkpoint",
    "normalize_advantages", "ppo_update", "prepare_batch", "rollout", "save_checkpoint", "train",
]
