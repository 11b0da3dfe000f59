"""Elastic-net and LASSO baselines on the shared proximal solver."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from icrsparse.model import MeasurementModel, RecoverySolution, SpikeSlabPrior, compute_rho
from icrsparse.prox import QuadraticForm, SolverSettings, solve_weighted_l1_quadratic


@dataclass(frozen=True)
class ElasticNetParams:
    l1_weight: float
    l2_weight: float

    def __post_init__(self):
        if self.l1_weight < 0 or self.l2_weight < 0:
            raise ValueError("elastic-net weights must be non-negative")
        if self.l1_weight == 0 and self.l2_weight == 0:
            raise ValueError("at least one elastic-net weight must be positive")

    @classmethod
    def from_prior(cls, prior: SpikeSlabPrior, on_nonsparsifying: str = "error"):
        """Default relaxation: ``l2 = lam`` and ``l1 = mean(rho)`` (clamped at 0)."""
        rho = compute_rho(prior, on_nonsparsifying)
        return cls(l1_weight=max(float(np.mean(rho)), 0.0), l2_weight=prior.lam)


def _solve(model, l1, l2, settings, prior, method):
    Q = QuadraticForm.from_least_squares(model.design_matrix, model.observation, l2)
    res = solve_weighted_l1_quadratic(Q, np.full(model.p, float(l1)), settings)
    info = {"kkt": res.kkt, "l1_weight": float(l1), "l2_weight": float(l2)}
    if prior is None:
        # no spike-and-slab prior: report the baseline's own objective
        return RecoverySolution(
            x=res.x,
            gamma=(res.x != 0).astype(np.int8),
            cost=res.objective,
            iterations=res.iterations,
            converged=res.converged,
            method=method,
            info=info,
        )
    return RecoverySolution.from_x(
        res.x, model, prior, iterations=res.iterations, converged=res.converged,
        method=method, info=info,
    )


def elastic_net(model: MeasurementModel, params: ElasticNetParams,
                settings: SolverSettings = SolverSettings(),
                prior: Optional[SpikeSlabPrior] = None) -> RecoverySolution:
    """Minimise ``||y - Ax||^2 + l2 ||x||^2 + l1 ||x||_1``.

    When ``prior`` is given the reported cost is the spike-and-slab MAP cost of
    the hard-rounded solution, so it is comparable with ICR and the oracle.
    """
    return _solve(model, params.l1_weight, params.l2_weight, settings, prior, "enet")


def lasso(model: MeasurementModel, l1_weight: float,
          settings: SolverSettings = SolverSettings(),
          prior: Optional[SpikeSlabPrior] = None) -> RecoverySolution:
    """Pure LASSO, ``||y - Ax||^2 + l1 ||x||_1``."""
    if not l1_weight > 0:
        raise ValueError("l1_weight must be positive")
    return _solve(model, l1_weight, 0.0, settings, prior, "lasso")
