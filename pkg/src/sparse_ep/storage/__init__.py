"""Run artifacts: checkpoints, traces, summaries and grid tables.

Import from specific modules:
    from sparse_ep.storage.checkpoint import save_checkpoint, load_checkpoint
    from sparse_ep.storage.results import RunSummary, RunStorage
    from sparse_ep.storage.validator import CheckpointValidator
"""
