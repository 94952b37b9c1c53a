"""Sparse GP model: covariance, FITC geometry, Gaussian algebra and probit sites.

Import from specific modules:
    from sparse_ep.model.types import HyperParams, GaussianNatural, SiteParams
    from sparse_ep.model.kernel import gram, cross_and_diag
    from sparse_ep.model.gaussian import moments, cavity, reconstruct
    from sparse_ep.model.sites import tilted_moments, site_update
"""
