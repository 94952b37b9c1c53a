"""Hyperparameter learning: EP energy, its gradient and the ascent optimizer.

Import from specific modules:
    from sparse_ep.hypergrad.energy import ep_energy, freeze_factors, factor_energy
    from sparse_ep.hypergrad.gradient import HyperGradient, grad_hyper
    from sparse_ep.hypergrad.optimizer import AdamState, opt_step
"""
