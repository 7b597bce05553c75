from .config import ExperimentConfig, dump_config, load_config, parse_config_text
from .experiment import FoldSystems, component_seed, run_experiment, run_normal, run_novel
from .report import ExperimentReport, ReportRow, emit_report, parse_report, render_table

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "FoldSystems",
    "ReportRow",
    "component_seed",
    "dump_config",
    "emit_report",
    "load_config",
    "parse_config_text",
    "parse_report",
    "render_table",
    "run_experiment",
    "run_normal",
    "run_novel",
]
