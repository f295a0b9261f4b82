"""Experiment configuration files.

A config is an INI file with three sections whose keys mirror the dataclass
fields exactly::

    [experiment]
    mode = baseline
    seeds = 0, 1, 2
    sweep = 2:0, 4:0, 10:0
    output_dir = out

    [sim]
    n_stations = 4

    [train]
    episodes = 100

Missing keys take the dataclass defaults; unknown sections or keys are
rejected with their name and line.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from ..errors import ConfigError, ConfigFileNotFound, ConfigParseError
from ..mappo.config import TrainConfig
from ..sim.config import SimConfig

MODES = ("train", "eval", "baseline", "bianchi-table")
_BOOL = configparser.ConfigParser.BOOLEAN_STATES


@dataclass
class ExperimentConfig:
    mode: str = "baseline"
    sim: SimConfig = field(default_factory=SimConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    checkpoint_path: Optional[Path] = None
    # (n_stations, n_agents) scenarios; empty means the single [sim] scenario
    sweep: list = field(default_factory=list)
    seeds: list = field(default_factory=lambda: [0])
    output_dir: Path = Path("out")

    def scenarios(self) -> list[tuple[int, int]]:
        return list(self.sweep) or [(self.sim.n_stations, self.sim.n_agents)]

    def validate(self) -> "ExperimentConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {self.mode!r}")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if self.mode == "eval" and self.checkpoint_path is None:
            raise ConfigError("eval mode needs checkpoint_path")
        self.sim.validate()
        self.train.validate()
        for n, m in self.scenarios():
            if n < 1 or not 0 <= m <= n:
                raise ConfigError(f"sweep entry {n}:{m} needs n >= 1 and 0 <= m <= n")
        return self


def _parse_value(raw: str, default, key: str):
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() not in _BOOL:
            raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
        return _BOOL[raw.lower()]
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    return raw


def _int_list(raw: str, key: str) -> list[int]:
    try:
        return [int(tok) for tok in re.split(r"[,\s]+", raw.strip()) if tok]
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated integers, got {raw!r}") from None


def parse_sweep(raw: str) -> list[tuple[int, int]]:
    """``"4:0, 4:2"`` -> ``[(4, 0), (4, 2)]``; a bare ``n`` means no agents."""
    out = []
    for tok in re.split(r"[,\s]+", raw.strip()):
        if not tok:
            continue
        n, _, m = tok.partition(":")
        try:
            out.append((int(n), int(m or 0)))
        except ValueError:
            raise ConfigError(f"sweep: bad entry {tok!r}, expected n or n:m") from None
    return out


def _key_line(text: str, section: str, key: str) -> int:
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", s, re.IGNORECASE):
            return lineno
    return 0


def _section_line(text: str, section: str) -> int:
    for lineno, line in enumerate(text.splitlines(), 1):
        if line.strip() == f"[{section}]":
            return lineno
    return 0


def _fill(obj, section, text: str, name: str) -> None:
    known = {f.name: f for f in fields(obj)}
    for key, raw in section.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in [{name}] (line {_key_line(text, name, key)})")
        setattr(obj, key, _parse_value(raw, getattr(obj, key), f"[{name}] {key}"))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigFileNotFound(f"config file not found: {path}")
    text = path.read_text()
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if isinstance(exc, configparser.ParsingError) and exc.errors:
            line = exc.errors[0][0]
        where = f" at line {line}" if line is not None else ""
        raise ConfigParseError(f"{path}{where}: {exc.message.splitlines()[0]}") from None

    for name in cp.sections():
        if name not in ("experiment", "sim", "train"):
            raise ConfigError(f"unknown section [{name}] (line {_section_line(text, name)})")

    cfg = ExperimentConfig()
    if cp.has_section("sim"):
        _fill(cfg.sim, cp["sim"], text, "sim")
    if cp.has_section("train"):
        _fill(cfg.train, cp["train"], text, "train")
    if cp.has_section("experiment"):
        for key, raw in cp["experiment"].items():
            if key == "mode":
                cfg.mode = raw.strip()
            elif key == "seeds":
                cfg.seeds = _int_list(raw, "seeds")
            elif key == "sweep":
                cfg.sweep = parse_sweep(raw)
            elif key == "checkpoint_path":
                cfg.checkpoint_path = Path(raw.strip()) if raw.strip() else None
            elif key == "output_dir":
                cfg.output_dir = Path(raw.strip())
            else:
                raise ConfigError(f"unknown key {key!r} in [experiment] "
                                  f"(line {_key_line(text, 'experiment', key)})")
    return cfg.validate()
