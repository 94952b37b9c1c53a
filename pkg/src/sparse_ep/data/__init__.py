"""Dataset ingestion, splitting, minibatching and synthetic GP data.

Import from specific modules:
    from sparse_ep.data.dataset import Dataset, DataError, load_csv, standardize_split
    from sparse_ep.data.synthetic import synthetic_gp
"""
