"""Iterative Convex Refinement for spike-and-slab sparse recovery."""

from icrsparse.model import (
    MeasurementModel,
    NonSparsifyingPrior,
    RecoverySolution,
    SpikeSlabPrior,
    compute_rho,
    log_posterior,
    map_cost,
)
from icrsparse.icr import IcrConfig, IcrTrace, icr_diagnostics, icr_solve, lemma1_prune
from icrsparse.oracle import OracleConfig, global_map, ridge_on_support
from icrsparse.baselines import ElasticNetParams, elastic_net, lasso

__version__ = "0.1.0"

__all__ = [
    "MeasurementModel",
    "SpikeSlabPrior",
    "RecoverySolution",
    "NonSparsifyingPrior",
    "compute_rho",
    "map_cost",
    "log_posterior",
    "IcrConfig",
    "IcrTrace",
    "icr_solve",
    "lemma1_prune",
    "icr_diagnostics",
    "OracleConfig",
    "global_map",
    "ridge_on_support",
    "ElasticNetParams",
    "elastic_net",
    "lasso",
]
