"""Experiment configs, grid runner, summaries and the command line."""

from .config import ExperimentSpec, parse_config, parse_config_text
from .runner import CSV_HEADER, ResultRow, read_csv, rows_to_csv, run_grid, write_csv
from .summary import capacity_means, summarize, summary_json
