"""Brute-force references: quadrature, finite differences and dense algebra.

These share no numerical code with the model path.

Import from specific modules:
    from sparse_ep.oracle.quadrature import hermite_nodes, quad_tilted
    from sparse_ep.oracle.finite_diff import fd_gradient
    from sparse_ep.oracle.verify import run_verification
"""
