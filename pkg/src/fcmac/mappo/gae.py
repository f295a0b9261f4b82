"""Generalized advantage estimation."""
from __future__ import annotations

import numpy as np

from .._jit import njit


@njit
def _gae_kernel(rewards, values, dones, gamma, lam, out):
    gae = 0.0
    for t in range(rewards.shape[0] - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * nonterminal - values[t]
        gae = delta + gamma * lam * nonterminal * gae
        out[t] = gae
    return out


def compute_gae(rewards, values, gamma: float, gae_lambda: float, dones=None) -> np.ndarray:
    """Advantages for one trajectory.

    ``values`` carries one more entry than ``rewards``: the bootstrap value of
    the state after the last step (0 when the episode ends there).  ``dones``
    marks steps after which the trajectory was cut.
    """
    rewards = np.ascontiguousarray(rewards, dtype=np.float64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.shape != (rewards.shape[0] + 1,):
        raise ValueError(f"need len(values) == len(rewards) + 1, got {values.shape[0]} and {rewards.shape[0]}")
    if dones is None:
        dones = np.zeros(rewards.shape[0])
    dones = np.ascontiguousarray(dones, dtype=np.float64)
    if dones.shape != rewards.shape:
        raise ValueError("dones must match rewards")
    return _gae_kernel(rewards, values, dones, float(gamma), float(gae_lambda), np.empty_like(rewards))


def normalize_advantages(adv, eps: float = 1e-8) -> np.ndarray:
    adv = np.asarray(adv, dtype=np.float64)
    if adv.size < 2:
        return adv - adv.mean() if adv.size else adv
    return (adv - adv.mean()) / (adv.std() + eps)
