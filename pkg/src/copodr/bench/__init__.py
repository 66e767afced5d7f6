"""Experiment families, scheme runners and reports."""
from .families import gen_index, gen_inventory, gen_newsvendor, gen_partition
from .suite import ExperimentConfig, StatTable, run_scheme, run_suite, run_sweep

__all__ = ["ExperimentConfig", "StatTable", "gen_index", "gen_inventory", "gen_newsvendor", "gen_partition",
           "run_scheme", "run_suite", "run_sweep"]
