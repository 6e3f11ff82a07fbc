"""Experiment harness: data ingestion, query workloads, efficiency reports."""

from .data import Database, ingest_csv, synthetic_database
from .experiment import EfficiencyReport, ExperimentConfig, load_config, parse_config, run_experiment
from .workload import gen_workload

__all__ = [
    "Database",
    "EfficiencyReport",
    "ExperimentConfig",
    "gen_workload",
    "ingest_csv",
    "load_config",
    "parse_config",
    "run_experiment",
    "synthetic_database",
]
