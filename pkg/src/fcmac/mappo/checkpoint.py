"""Checkpoint container.

A checkpoint is an ``.npz`` archive: one row-major array per network tensor
(keys ``actor/<name>`` and ``critic/<name>``) plus a JSON header with the
feature scales, multiplier, episode counter and configuration hash.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..errors import TrainingError
from .networks import Actor, Critic, FeatureScales

FORMAT = "fcmac-checkpoint/1"


@dataclass
class Checkpoint:
    actor: Actor
    critic: Critic
    scales: FeatureScales
    lam: float
    episode: int
    config_hash: str
    meta: dict = field(default_factory=dict)


def save_checkpoint(path, ckpt: Checkpoint) -> Path:
    """Write atomically: a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {}
    for prefix, net in (("actor", ckpt.actor), ("critic", ckpt.critic)):
        for name, t in net.state_dict().items():
            arrays[f"{prefix}/{name}"] = np.ascontiguousarray(t.detach().cpu().numpy())
    header = dict(format=FORMAT, scales=ckpt.scales.as_array().tolist(), lam=ckpt.lam, episode=ckpt.episode,
                  config_hash=ckpt.config_hash, embed_dim=ckpt.actor.query.in_features,
                  shapes={k: list(v.shape) for k, v in arrays.items()}, meta=ckpt.meta)
    arrays["header"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    fd, tmp = tempfile.mkstemp(prefix=".ckpt-", suffix=".npz", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, **arrays)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise TrainingError(f"could not write checkpoint {path}: {exc}") from exc
    return path


def read_header(path) -> dict:
    with np.load(path) as z:
        return json.loads(bytes(z["header"]).decode())


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    with np.load(path) as z:
        header = json.loads(bytes(z["header"]).decode())
        if header.get("format") != FORMAT:
            raise ValueError(f"{path}: not a checkpoint (format {header.get('format')!r})")
        arrays = {k: z[k] for k in z.files if k != "header"}
    dim = int(header["embed_dim"])
    actor, critic = Actor(dim), Critic(dim)
    for prefix, net in (("actor", actor), ("critic", critic)):
        sd = {k[len(prefix) + 1:]: torch.from_numpy(v.copy()) for k, v in arrays.items()
              if k.startswith(prefix + "/")}
        net.load_state_dict(sd)
    return Checkpoint(actor, critic, FeatureScales.from_array(header["scales"]), float(header["lam"]),
                      int(header["episode"]), header["config_hash"], header.get("meta", {}))
