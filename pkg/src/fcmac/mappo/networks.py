"""Attention actor and centralized attention critic.

Both networks see sets: the actor attends from the agent's own embedding over
itself plus its active neighbors, the critic from every agent's embedding over
all agents plus the legacy stations.  Padding is masked, so outputs do not
depend on how many padded slots a batch carries or on the order of set
members.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

EMBED_DIM = 64
N_ACTIONS = 4
TIME_SCALE = 1e4  # us


@dataclass(frozen=True)
class FeatureScales:
    """Fixed input normalization, stored with every checkpoint."""

    cw: float = 1024.0
    deferrals: float = 10.0
    time: float = TIME_SCALE

    @classmethod
    def for_config(cls, cw_max: int) -> "FeatureScales":
        return cls(cw=float(cw_max + 1))

    def self_scale(self) -> np.ndarray:
        return np.array([self.cw, self.deferrals, self.cw, self.time, self.time])

    def normalize_self(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) / self.self_scale()

    def normalize_pairs(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) / self.time

    def as_array(self) -> np.ndarray:
        return np.array([self.cw, self.deferrals, self.time])

    @classmethod
    def from_array(cls, a) -> "FeatureScales":
        return cls(*(float(v) for v in a))


def _masked_attention(q, k, v, mask):
    """Single-head scaled dot-product attention.

    q: (B, Q, D); k, v: (B, K, D); mask: (B, K) bool, True = attend.
    """
    # broadcast-and-sum beats bmm by a wide margin for the tiny key sets here
    scores = (q[:, :, None, :] * k[:, None, :, :]).sum(-1) / math.sqrt(q.shape[-1])
    scores = scores.masked_fill(~mask[:, None, :], float("-inf"))
    weights = torch.softmax(scores, dim=-1)
    return (weights[..., None] * v[:, None, :, :]).sum(2)


class Actor(nn.Module):
    """Shared policy: local observation -> logits over {0, 1, 2, CW}."""

    def __init__(self, dim: int = EMBED_DIM):
        super().__init__()
        self.self_embed = nn.Sequential(nn.Linear(5, dim), nn.ReLU())
        self.neigh_embed = nn.Sequential(nn.Linear(2, dim), nn.ReLU())
        self.query = nn.Linear(dim, dim)
        self.key = nn.Linear(dim, dim)
        self.value = nn.Linear(dim, dim)
        self.head = nn.Sequential(nn.Linear(2 * dim, dim), nn.ReLU(), nn.Linear(dim, N_ACTIONS))
        # near-uniform initial policy
        nn.init.orthogonal_(self.head[-1].weight, gain=0.01)
        nn.init.zeros_(self.head[-1].bias)

    def forward(self, own: torch.Tensor, neigh: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """own (B, 5), neigh (B, L, 2), mask (B, L) -> logits (B, 4)."""
        e_self = self.self_embed(own)
        tokens = torch.cat([e_self[:, None, :], self.neigh_embed(neigh)], dim=1)
        keep = torch.cat([torch.ones_like(mask[:, :1]), mask], dim=1)
        ctx = _masked_attention(self.query(e_self)[:, None, :], self.key(tokens), self.value(tokens), keep)
        return self.head(torch.cat([e_self, ctx[:, 0]], dim=-1))

    def distribution(self, own, neigh, mask) -> torch.distributions.Categorical:
        # validation off: non-finite logits are caught as a non-finite loss instead
        return torch.distributions.Categorical(logits=self(own, neigh, mask), validate_args=False)


class Critic(nn.Module):
    """Centralized value of the global state."""

    def __init__(self, dim: int = EMBED_DIM):
        super().__init__()
        self.agent_embed = nn.Sequential(nn.Linear(5, dim), nn.ReLU())
        self.legacy_embed = nn.Sequential(nn.Linear(2, dim), nn.ReLU())
        self.query = nn.Linear(dim, dim)
        self.key = nn.Linear(dim, dim)
        self.value = nn.Linear(dim, dim)
        self.head = nn.Sequential(nn.Linear(2 * dim, dim), nn.ReLU(), nn.Linear(dim, 1))

    def forward(self, agents, agent_mask, legacy, legacy_mask) -> torch.Tensor:
        """agents (B, M, 5), legacy (B, G, 2) with masks -> values (B,)."""
        e_agents = self.agent_embed(agents)
        tokens = torch.cat([e_agents, self.legacy_embed(legacy)], dim=1)
        keep = torch.cat([agent_mask, legacy_mask], dim=1)
        ctx = _masked_attention(self.query(e_agents), self.key(tokens), self.value(tokens), keep)
        feats = torch.cat([e_agents, ctx], dim=-1)
        w = agent_mask.to(feats.dtype)[..., None]
        pooled = (feats * w).sum(1) / w.sum(1).clamp_min(1.0)
        return self.head(pooled)[:, 0]


class NumpyActor:
    """Inference-only copy of an :class:`Actor` for fast rollouts.

    Holds a frozen snapshot of the weights, so later optimizer steps on the
    torch module do not leak into an ongoing rollout.  Self and neighbor
    tokens share one embedding matmul (block weights plus a token-type
    indicator carrying the biases), and query/key/value share another.
    """

    def __init__(self, actor: Actor):
        w = {k: v.detach().cpu().double().numpy().copy() for k, v in actor.state_dict().items()}
        dim = w["query.weight"].shape[0]
        self.dim = dim
        embed = np.zeros((9, dim))
        embed[0:5] = w["self_embed.0.weight"].T
        embed[5:7] = w["neigh_embed.0.weight"].T
        embed[7] = w["self_embed.0.bias"]
        embed[8] = w["neigh_embed.0.bias"]
        self.embed = embed
        self.qkv = np.concatenate([w["query.weight"].T, w["key.weight"].T, w["value.weight"].T], axis=1)
        self.qkv_bias = np.concatenate([w["query.bias"], w["key.bias"], w["value.bias"]])
        self.h1, self.b1 = w["head.0.weight"].T.copy(), w["head.0.bias"]
        self.h2, self.b2 = w["head.2.weight"].T.copy(), w["head.2.bias"]

    def logits(self, own, neigh, mask) -> np.ndarray:
        k, L = neigh.shape[0], neigh.shape[1]
        d = self.dim
        x = np.zeros((k, 1 + L, 9))
        x[:, 0, 0:5] = own
        x[:, 0, 7] = 1.0
        x[:, 1:, 5:7] = neigh
        x[:, 1:, 8] = 1.0
        e = np.maximum(x @ self.embed, 0.0)
        qkv = e @ self.qkv + self.qkv_bias
        q = qkv[:, 0, :d]
        scores = np.einsum("bd,bkd->bk", q, qkv[:, :, d:2 * d]) / math.sqrt(d)
        scores[:, 1:][~mask] = -np.inf
        scores -= scores.max(axis=1, keepdims=True)
        att = np.exp(scores)
        att /= att.sum(axis=1, keepdims=True)
        ctx = np.einsum("bk,bkd->bd", att, qkv[:, :, 2 * d:])
        h = np.maximum(np.concatenate([e[:, 0], ctx], axis=1) @ self.h1 + self.b1, 0.0)
        return h @ self.h2 + self.b2

    def probs(self, own, neigh, mask) -> np.ndarray:
        z = self.logits(own, neigh, mask)
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(axis=1, keepdims=True)
