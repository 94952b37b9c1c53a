"""Experiment harness: single runs, grids and their aggregation.

Import from specific modules:
    from sparse_ep.experiments.runner import ExperimentRunner, RunRequest
    from sparse_ep.experiments.grid import GridSpec, run_grid
    from sparse_ep.experiments.aggregate import GridAggregator
"""
