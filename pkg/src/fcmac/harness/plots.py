"""Vector plots from metrics CSVs.

Each input is recognised by its header: training metrics give three
learning curves, scenario metrics give a throughput bar chart and a
collision-rate-vs-n plot, and an analytic table adds the model overlay to
the latter.  SVGs carry no timestamp and a fixed id salt, so identical
inputs render identical files.
"""
from __future__ import annotations

import csv
import logging
import warnings
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ..mappo.train import METRICS_FIELDS  # noqa: E402
from .runs import METRICS_ROW_FIELDS  # noqa: E402

log = logging.getLogger(__name__)

BIANCHI_FIELDS = ["n", "tau", "p"]
LEARNING_CURVES = (("mean_reward_per_tx", "mean reward per transmission", "learning_reward.svg"),
                   ("mean_backoff_ratio", "mean backoff ratio", "learning_backoff_ratio.svg"),
                   ("lambda", "Lagrange multiplier", "learning_lambda.svg"))


class MetricsFormatError(ValueError):
    """A metrics CSV that cannot be parsed."""


def _read(path: Path):
    """-> (kind, rows); kind is None for an empty file."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return None, []
        kinds = {tuple(METRICS_FIELDS): "train", tuple(METRICS_ROW_FIELDS): "scenario",
                 tuple(BIANCHI_FIELDS): "bianchi"}
        kind = kinds.get(tuple(header))
        if kind is None:
            raise MetricsFormatError(f"{path}: unrecognised header {header}")
        rows = []
        for lineno, raw in enumerate(reader, 2):
            if len(raw) != len(header):
                raise MetricsFormatError(f"{path}, row {lineno}: expected {len(header)} fields, got {len(raw)}")
            row = dict(zip(header, raw))
            for key, value in row.items():
                if key in ("scenario", "group"):
                    continue
                try:
                    row[key] = float(value)
                except ValueError:
                    raise MetricsFormatError(f"{path}, row {lineno}: {key}={value!r} is not a number") from None
            rows.append(row)
        return kind, rows


def _save(fig, path: Path) -> Path:
    with plt.rc_context({"svg.hashsalt": "fcmac", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _learning_curves(series: list[tuple[str, list[dict]]], out: Path) -> list[Path]:
    paths = []
    for key, label, name in LEARNING_CURVES:
        fig, ax = plt.subplots(figsize=(6, 4))
        for tag, rows in series:
            ax.plot([r["episode"] for r in rows], [r[key] for r in rows], label=tag, linewidth=1)
        ax.set_xlabel("episode")
        ax.set_ylabel(label)
        if len(series) > 1:
            ax.legend(fontsize="small")
        paths.append(_save(fig, out / name))
    return paths


def _scenario_n(sid: str) -> int:
    return int(sid.split("_")[0][1:])


def _throughput_bars(rows: list[dict], out: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    scenarios = sorted({r["scenario"] for r in rows}, key=lambda s: (_scenario_n(s), s))
    width = 0.4
    for k, group in enumerate(("legacy", "agent")):
        heights = []
        for sid in scenarios:
            vals = [r["throughput_mbps"] for r in rows if r["scenario"] == sid and r["group"] == group]
            if group == "legacy" and not vals:
                # all-legacy scenarios carry only the pooled group
                vals = [r["throughput_mbps"] for r in rows if r["scenario"] == sid and r["group"] == "all"
                        and not any(q["scenario"] == sid and q["group"] == "agent" for q in rows)]
            heights.append(sum(vals) / len(vals) if vals else 0.0)
        ax.bar([i + (k - 0.5) * width for i in range(len(scenarios))], heights, width, label=group)
    ax.set_xticks(range(len(scenarios)), scenarios)
    ax.set_ylabel("throughput per station (Mbit/s)")
    ax.legend()
    return _save(fig, out / "throughput_by_type.svg")


def _collision_vs_n(rows: list[dict], bianchi: list[dict], out: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    by_m: dict[int, dict[int, list[float]]] = {}
    for r in rows:
        if r["group"] != "all":
            continue
        n, m = (int(p[1:]) for p in r["scenario"].split("_"))
        by_m.setdefault(m, {}).setdefault(n, []).append(r["collision_rate"])
    for m, pts in sorted(by_m.items()):
        ns = sorted(pts)
        label = "legacy (BEB)" if m == 0 else f"{m} agents"
        ax.plot(ns, [sum(pts[n]) / len(pts[n]) for n in ns], marker="o", label=label)
    if bianchi:
        ax.plot([r["n"] for r in bianchi], [r["p"] for r in bianchi], "k--", label="analytic model")
    ax.set_xlabel("stations")
    ax.set_ylabel("collision rate")
    if by_m or bianchi:
        ax.legend()
    return _save(fig, out / "collision_vs_n.svg")


def emit_plots(paths, output_dir) -> list[Path]:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_series, scenario_rows, bianchi_rows = [], [], []
    seen = set()
    for p in map(Path, paths):
        kind, rows = _read(p)
        if kind is None or not rows:
            warnings.warn(f"{p}: no metrics rows", stacklevel=2)
        seen.add(kind)
        if kind == "train":
            train_series.append((p.parent.name or p.stem, rows))
        elif kind == "scenario":
            scenario_rows.extend(rows)
        elif kind == "bianchi":
            bianchi_rows.extend(rows)
    written = []
    if "train" in seen:
        written += _learning_curves(train_series, out)
    if "scenario" in seen:
        written.append(_throughput_bars(scenario_rows, out))
    if "scenario" in seen or "bianchi" in seen:
        written.append(_collision_vs_n(scenario_rows, bianchi_rows, out))
    if not written:
        # nothing recognisable: leave an empty figure behind as the record
        fig, ax = plt.subplots(figsize=(6, 4))
        written.append(_save(fig, out / "empty.svg"))
    for w in written:
        log.info("wrote %s", w)
    return written
