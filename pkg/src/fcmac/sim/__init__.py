from .config import SimConfig
from .engine import (ACTION_VALUES, LEGACY, FixedActionPolicy, RandomActionPolicy, SimTrace,
                     Simulator, read_summary, run)
from .events import EventKind, EventQueue, SimEvent
from .phy import SlotOutcome, frame_airtime, resolve_slot
from .station import DecisionPoint, StationState, TxIntent, advance_station

__all__ = [
    "ACTION_VALUES", "LEGACY", "DecisionPoint", "EventKind", "EventQueue", "FixedActionPolicy",
    "RandomActionPolicy", "SimConfig", "SimEvent", "SimTrace", "Simulator", "SlotOutcome",
    "StationState", "TxIntent", "advance_station", "frame_airtime", "read_summary", "resolve_slot", "run",
]
