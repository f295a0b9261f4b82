"""Scenario runs: all-legacy baselines, checkpoint evaluation, training and
the analytic collision table."""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from ..bianchi import write_table
from ..errors import ConfigError, SimulationInvariantError
from ..mappo.checkpoint import load_checkpoint, read_header
from ..mappo.networks import NumpyActor
from ..mappo.rollout import LearnedPolicy
from ..mappo.train import train
from ..sim import kernel as K
from ..sim.engine import LEGACY, SimTrace, run
from .config import ExperimentConfig

log = logging.getLogger(__name__)


class CheckpointMismatch(ConfigError):
    """Checkpoint was trained for a different MAC configuration."""


@dataclass
class MetricsRow:
    """One scenario x seed x station group.

    ``group`` is ``all``, ``legacy``, ``agent`` or ``sta<i>`` for a single
    station; throughput is the per-station mean over the group.
    """

    scenario: str
    seed: int
    group: str
    stations: int
    throughput_mbps: float
    aggregate_throughput_mbps: float
    collision_rate: float
    mean_backoff_ratio: float


METRICS_ROW_FIELDS = [f.name for f in fields(MetricsRow)]


@dataclass
class RunReport:
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)   # (scenario, seed, message)


def scenario_id(n: int, m: int) -> str:
    return f"n{n}_m{m}"


def trace_rows(trace: SimTrace, scenario: str, seed: int) -> list[MetricsRow]:
    """Group rows (all, legacy, agent when present) followed by station rows."""
    n = trace.config.n_stations
    tput = trace.throughput_mbps()
    rec_station = trace.records[:, K.R_STATION]
    groups = [("all", np.arange(n))]
    legacy, agents = np.flatnonzero(~trace.is_agent), np.flatnonzero(trace.is_agent)
    if len(agents):
        groups += [("legacy", legacy), ("agent", agents)]
    groups += [(f"sta{i}", np.array([i])) for i in range(n)]
    rows = []
    for name, idx in groups:
        if len(idx) == 0:
            continue
        sel = np.isin(rec_station, idx)
        ratio = float(trace.ratios[sel, 0].mean()) if sel.any() else 0.0
        rows.append(MetricsRow(scenario, seed, name, len(idx), float(tput[idx].mean()),
                               float(tput[idx].sum()), trace.collision_fraction(idx), ratio))
    return rows


def _fmt(v) -> str:
    return f"{v:.9g}" if isinstance(v, float) else str(v)


def write_metrics_csv(path, rows) -> None:
    """Rows are written sorted by (scenario, seed), keeping group order."""
    order = sorted(range(len(rows)), key=lambda k: (rows[k].scenario, rows[k].seed, k))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_ROW_FIELDS)
        for k in order:
            w.writerow([_fmt(v) for v in asdict(rows[k]).values()])


def read_metrics_csv(path) -> list[MetricsRow]:
    with open(path, newline="") as fh:
        out = []
        for row in csv.DictReader(fh):
            out.append(MetricsRow(row["scenario"], int(row["seed"]), row["group"], int(row["stations"]),
                                  *(float(row[k]) for k in METRICS_ROW_FIELDS[4:])))
        return out


def _simulate_grid(cfg: ExperimentConfig, policies_for) -> RunReport:
    report = RunReport()
    for n, m in cfg.scenarios():
        sid = scenario_id(n, m)
        sim_cfg = replace(cfg.sim, n_stations=n, n_agents=m)
        for seed in cfg.seeds:
            try:
                trace = run(sim_cfg, policies_for(n, m, seed), seed=seed)
            except SimulationInvariantError as exc:
                log.error("scenario %s seed %d failed: %s", sid, seed, exc)
                report.failures.append((sid, seed, str(exc)))
                continue
            report.rows.extend(trace_rows(trace, sid, seed))
    return report


def _finish(cfg: ExperimentConfig, report: RunReport, name: str) -> RunReport:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out / name, report.rows)
    for sid, seed, msg in report.failures:
        log.warning("failed: %s seed %d: %s", sid, seed, msg)
    return report


def run_baseline(cfg: ExperimentConfig) -> RunReport:
    """All-legacy runs over the sweep (agent counts are ignored) and seeds."""
    cfg = replace(cfg, sweep=[(n, 0) for n, _ in cfg.scenarios()])
    return _finish(cfg, _simulate_grid(cfg, lambda n, m, seed: [LEGACY] * n), "metrics.csv")


def policy_seed(seed: int) -> np.random.SeedSequence:
    """Action-sampling stream, disjoint from every station's backoff stream."""
    return np.random.SeedSequence(seed, spawn_key=(2**31,))


def run_eval(cfg: ExperimentConfig, checkpoint=None) -> RunReport:
    """Mixed legacy/agent runs with a trained shared policy on stations
    ``0..m-1``.  The checkpoint is checked against the MAC configuration
    before anything is simulated."""
    path = Path(checkpoint or cfg.checkpoint_path)
    header = read_header(path)
    if header["config_hash"] != cfg.sim.digest():
        raise CheckpointMismatch(f"{path} was trained for MAC config {header['config_hash']}, "
                                 f"this config is {cfg.sim.digest()}")
    ck = load_checkpoint(path)
    actor = NumpyActor(ck.actor)

    def policies(n, m, seed):
        pol = LearnedPolicy(actor, ck.scales, np.random.default_rng(policy_seed(seed)))
        return [pol] * m + [LEGACY] * (n - m)

    return _finish(cfg, _simulate_grid(cfg, policies), "metrics.csv")


def run_train(cfg: ExperimentConfig) -> list[Path]:
    """One training run per seed; a single seed writes straight into the
    output directory, several seeds into ``seed<k>`` subdirectories."""
    out = Path(cfg.output_dir)
    paths = []
    for seed in cfg.seeds:
        target = out if len(cfg.seeds) == 1 else out / f"seed{seed}"
        result = train(cfg.train, replace(cfg.sim, seed=seed), target, seed=seed)
        paths.append(result.checkpoint)
    return paths


def run_bianchi(cfg: ExperimentConfig) -> Path:
    """Analytic collision probabilities for the sweep's station counts
    (2..10 without a sweep)."""
    ns = sorted({n for n, _ in cfg.sweep}) or list(range(2, 11))
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "bianchi.csv"
    with open(path, "w", newline="") as fh:
        write_table(ns, cfg.sim.cw_min + 1, cfg.sim.max_stage, fh)
    return path


def eval_assertions(rows: list[MetricsRow]) -> list[str]:
    """Threshold checks for ``eval --assert``; returns failure messages.

    Homogeneous scenarios need a mean agent backoff ratio of at least 0.48,
    mixed ones an agent throughput no lower than the legacy throughput.
    """
    fails = []
    by_scenario: dict[str, dict[str, list[MetricsRow]]] = {}
    for r in rows:
        by_scenario.setdefault(r.scenario, {}).setdefault(r.group, []).append(r)
    for sid, groups in sorted(by_scenario.items()):
        agent, legacy = groups.get("agent", []), groups.get("legacy", [])
        if not agent:
            continue
        ratio = float(np.mean([r.mean_backoff_ratio for r in agent]))
        if not legacy:
            if ratio < 0.48:
                fails.append(f"{sid}: mean backoff ratio {ratio:.3f} < 0.48")
            continue
        ta = float(np.mean([r.throughput_mbps for r in agent]))
        tl = float(np.mean([r.throughput_mbps for r in legacy]))
        if ta < tl:
            fails.append(f"{sid}: agent throughput {ta:.2f} Mbit/s below legacy {tl:.2f} Mbit/s")
    return fails
