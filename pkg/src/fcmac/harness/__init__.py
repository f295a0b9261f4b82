from .config import MODES, ExperimentConfig, load_config, parse_sweep
from .plots import MetricsFormatError, emit_plots
from .runs import (METRICS_ROW_FIELDS, CheckpointMismatch, MetricsRow, RunReport, eval_assertions,
                   read_metrics_csv, run_baseline, run_bianchi, run_eval, run_train, scenario_id, trace_rows,
                   write_metrics_csv)

__all__ = [
    "CheckpointMismatch", "ExperimentConfig", "METRICS_ROW_FIELDS", "MODES", "MetricsFormatError", "MetricsRow",
    "RunReport", "emit_plots", "eval_assertions", "load_config", "parse_sweep", "read_metrics_csv",
    "run_baseline", "run_bianchi", "run_eval", "run_train", "scenario_id", "trace_rows", "write_metrics_csv",
]
