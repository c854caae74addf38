"""Clique-tree inference for hybrid Bayesian networks.

Exact Shafer-Shenoy propagation for discrete networks, and approximate
propagation with density-tree potentials learned from importance-weighted
samples for networks that mix discrete and continuous variables.
"""
from .approx import PropagationConfig, query_marginal, run_approximate
from .exact import exact_marginals
from .network import HybridNetwork
from .network_io import load_evidence, load_network

__all__ = [
    "HybridNetwork",
    "PropagationConfig",
    "exact_marginals",
    "load_evidence",
    "load_network",
    "query_marginal",
    "run_approximate",
]
