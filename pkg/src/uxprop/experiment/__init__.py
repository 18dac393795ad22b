"""Sweeps, regime classification, result export and the command line."""

from .cases import CASE1, CASE2, CASE3, UNCLASSIFIED, CaseLabel, classify_case, synthetic_fixtures
from .config import SIGMAS_HIGH, SIGMAS_LOW, ConfigError, SweepConfig, load_config
from .export import (
    CSV_HEADER, Aggregate, SweepResult, export_diagonals, export_histograms, export_results,
    read_csv, read_json, write_csv, write_json,
)
from .sweep import aggregate, load_data, make_spec, prepare, run_sweep, train_reference
