"""Exhaustive global minimiser of the MAP objective for small p.

For a fixed support S the problem is ridge regression, whose optimal value is

    ||y||^2 - b_S' (A_S'A_S + lam I)^{-1} b_S + sum_{i in S} rho_i,   b = A'y

so every support costs one small dense solve. Supports are enumerated by size
and then lexicographically; solves are batched per size.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from icrsparse.model import MeasurementModel, RecoverySolution, SpikeSlabPrior, map_cost

HARD_MAX_P = 24
_BATCH = 16384


class ProblemTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class OracleConfig:
    max_p: int = 20
    max_support: Optional[int] = None
    nonneg: bool = False

    def __post_init__(self):
        if not 1 <= self.max_p <= HARD_MAX_P:
            raise ValueError(f"max_p must be in [1, {HARD_MAX_P}]")
        if self.max_support is not None and self.max_support < 0:
            raise ValueError("max_support must be non-negative")


def ridge_on_support(model: MeasurementModel, prior: SpikeSlabPrior, support):
    """Ridge solution restricted to ``support`` and its exact MAP cost."""
    S = np.asarray(sorted(set(int(i) for i in support)), dtype=int)
    p = model.p
    if S.size and (S[0] < 0 or S[-1] >= p):
        raise IndexError(f"support index out of range for p={p}")
    x = np.zeros(p)
    if S.size:
        AS = model.design_matrix[:, S]
        G = AS.T @ AS
        G[np.diag_indices_from(G)] += prior.lam
        x[S] = np.linalg.solve(G, AS.T @ model.observation)
    gamma = np.zeros(p, dtype=np.int8)
    gamma[S] = 1
    return x, map_cost(x, gamma, model, prior)


def _size_batches(p, size, cap=_BATCH):
    it = itertools.combinations(range(p), size)
    while True:
        chunk = list(itertools.islice(it, cap))
        if not chunk:
            return
        yield np.asarray(chunk, dtype=np.intp).reshape(len(chunk), size)


def global_map(model: MeasurementModel, prior: SpikeSlabPrior,
               config: OracleConfig = OracleConfig()) -> RecoverySolution:
    """Minimum-cost ``(x, gamma)`` over all supports.

    Ties go to the smaller support, then the lexicographically smallest one.
    With ``config.nonneg`` only supports whose ridge solution is strictly
    positive compete: a non-negative optimum with a zero entry costs more than
    the same point on the smaller support, and a strictly positive
    constrained optimum on S is the unconstrained ridge solution on S.
    """
    p = model.p
    if p > config.max_p:
        raise ProblemTooLarge(f"p={p} exceeds oracle max_p={config.max_p}")
    A, y = model.design_matrix, model.observation
    G = A.T @ A
    G[np.diag_indices_from(G)] += prior.lam
    b = A.T @ y
    yy = float(y @ y)
    rho = prior.rho
    max_size = p if config.max_support is None else min(p, config.max_support)

    best_cost = yy  # empty support
    best_support = ()
    evaluated = 1
    for size in range(1, max_size + 1):
        for S in _size_batches(p, size):
            Gs = G[S[:, :, None], S[:, None, :]]
            bs = b[S]
            z = np.linalg.solve(Gs, bs[:, :, None])[:, :, 0]
            cost = yy - np.einsum("ij,ij->i", bs, z) + rho[S].sum(axis=1)
            if config.nonneg:
                cost = np.where(np.all(z > 0, axis=1), cost, math.inf)
            evaluated += S.shape[0]
            j = int(np.argmin(cost))
            if cost[j] < best_cost:
                best_cost = float(cost[j])
                best_support = tuple(int(i) for i in S[j])

    x, cost = ridge_on_support(model, prior, best_support)
    gamma = np.zeros(p, dtype=np.int8)
    gamma[list(best_support)] = 1
    return RecoverySolution(
        x=x,
        gamma=gamma,
        cost=cost,
        iterations=evaluated,
        converged=True,
        method="oracle",
        info={"support": list(best_support), "supports_evaluated": evaluated},
    )
