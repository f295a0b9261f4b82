"""Binary exponential backoff for legacy stations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BebState:
    cw: int
    retry_stage: int = 0
    cw_min: int = 15
    cw_max: int = 1023

    @classmethod
    def initial(cls, cw_min: int = 15, cw_max: int = 1023) -> "BebState":
        return cls(cw=cw_min, retry_stage=0, cw_min=cw_min, cw_max=cw_max)


def beb_draw(cw: int, rng: np.random.Generator) -> int:
    """Uniform backoff counter in ``[0, cw]``."""
    if cw < 0:
        raise ValueError(f"cw must be >= 0, got {cw}")
    if cw == 0:
        return 0
    return int(rng.integers(0, cw + 1))


def double_cw(cw: int, cw_max: int) -> int:
    return min(2 * (cw + 1) - 1, cw_max)


def beb_on_failure(state: BebState) -> BebState:
    return BebState(double_cw(state.cw, state.cw_max), state.retry_stage + 1, state.cw_min, state.cw_max)


def beb_on_success(state: BebState) -> BebState:
    return BebState(state.cw_min, 0, state.cw_min, state.cw_max)


def cw_ladder(cw_min: int, cw_max: int) -> list[int]:
    """Every window reachable from ``cw_min`` by repeated doubling."""
    out = [cw_min]
    while out[-1] < cw_max:
        out.append(double_cw(out[-1], cw_max))
    return out


def conditional_tx_probability(cw: int, waited: int) -> float:
    """Probability a BEB station that already waited ``waited`` generic slots
    transmits in the next one, ``1 / (cw - waited)``.

    Treats the window as ``cw`` equally likely slots; the simulator itself
    draws from ``[0, cw]``.
    """
    if waited < 0 or waited >= cw:
        raise ValueError(f"need 0 <= waited < cw, got waited={waited}, cw={cw}")
    return 1.0 / (cw - waited)
