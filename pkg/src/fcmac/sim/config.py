from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass

from ..errors import ConfigError
from .phy import frame_airtime


@dataclass
class SimConfig:
    """One BSS worth of stations with saturated uplink traffic.

    Durations in microseconds except ``warmup`` and ``sim_time`` (seconds).
    Defaults approximate single-stream 20 MHz HE-MCS9 with 1500-byte frames.
    """

    n_stations: int = 4
    n_agents: int = 0
    slot: int = 9
    sifs: int = 16
    difs: int = 34
    cw_min: int = 15
    cw_max: int = 1023
    payload_bytes: int = 1500
    data_rate: float = 114.7
    ack_duration: int = 32
    preamble_duration: int = 40
    warmup: float = 1.0
    sim_time: float = 6.0
    seed: int = 0
    # a legacy station's frozen counter loses one count per deferral period
    busy_slot_countdown: bool = True

    def validate(self) -> "SimConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.n_stations >= 1, "n_stations must be >= 1")
        need(0 <= self.n_agents <= self.n_stations, "n_agents must satisfy 0 <= n_agents <= n_stations")
        need(self.slot > 0, "slot must be > 0")
        need(self.sifs >= 0, "sifs must be >= 0")
        need(self.difs > self.sifs, "difs must exceed sifs")
        need(self.cw_min >= 1, "cw_min must be >= 1")
        need(self.cw_max >= self.cw_min, "cw_max must be >= cw_min")
        ratio = (self.cw_max + 1) / (self.cw_min + 1)
        need((self.cw_max + 1) % (self.cw_min + 1) == 0 and ratio == 2 ** round(math.log2(ratio)),
             "cw_max+1 must be a power-of-two multiple of cw_min+1")
        need(self.payload_bytes >= 0, "payload_bytes must be >= 0")
        need(self.data_rate > 0, "data_rate must be > 0")
        need(self.ack_duration > 0 and self.preamble_duration >= 0, "frame durations must be positive")
        need(self.warmup >= 0, "warmup must be >= 0")
        need(self.sim_time > self.warmup, "sim_time must exceed warmup")
        return self

    @property
    def airtime(self) -> int:
        return frame_airtime(self.payload_bytes, self.data_rate, self.preamble_duration)

    @property
    def ack_timeout(self) -> int:
        return self.sifs + self.ack_duration + self.slot

    @property
    def collision_join_slots(self) -> int:
        """Slot boundaries, counted from the end of DIFS, that pass before a
        collided station (which first waits out its ACK timeout) resumes."""
        return max(0, -(-(self.ack_timeout - self.difs) // self.slot))

    @property
    def max_stage(self) -> int:
        return round(math.log2((self.cw_max + 1) / (self.cw_min + 1)))

    @property
    def warmup_us(self) -> int:
        return int(round(self.warmup * 1e6))

    @property
    def end_us(self) -> int:
        return int(round(self.sim_time * 1e6))

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """Hash of the fields that change what a policy observes."""
        keep = {k: v for k, v in self.to_dict().items() if k not in ("seed", "sim_time", "warmup", "n_agents")}
        return hashlib.sha256(json.dumps(keep, sort_keys=True).encode()).hexdigest()[:16]
