"""Iterative Convex Refinement (ICR) outer loop.

Each outer iteration replaces the binary indicator gamma_i by the ratio
x_i / mu_i, where mu is the running mean of all previous iterates, and solves
the resulting convex problem:

    unconstrained:  min ||y - Ax||^2 + lam ||x||^2 + sum rho_i |x_i| / |mu_i|
    nonnegative:    min ||y - Ax||^2 + lam ||x||^2 + sum rho_i x_i / |mu_i|,  x >= 0
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from icrsparse.model import (
    MeasurementModel,
    RecoverySolution,
    SpikeSlabPrior,
    compute_rho,
    hard_round,
    map_cost,
)
from icrsparse.prox import (
    QuadraticForm,
    SolverSettings,
    safe_lipschitz,
    solve_nonneg_linear_quadratic,
    solve_weighted_l1_quadratic,
)

log = logging.getLogger(__name__)

VARIANTS = ("unconstrained", "nonnegative")


@dataclass(frozen=True)
class IcrConfig:
    variant: str = "unconstrained"
    tol: float = 1e-6
    max_outer_iters: int = 500
    pruning: str = "off"
    alpha: Optional[float] = None  # default 1/(2(q+p+1)), resolved per problem
    mu_floor: float = 1e-12
    on_nonsparsifying: str = "error"
    settings: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be positive")
        if self.pruning not in ("off", "lemma1"):
            raise ValueError(f"pruning must be 'off' or 'lemma1', got {self.pruning!r}")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.mu_floor > 0:
            raise ValueError("mu_floor must be positive")

    def resolved_alpha(self, q: int, p: int) -> float:
        alpha = 1.0 / (2.0 * (q + p + 1)) if self.alpha is None else self.alpha
        if self.pruning == "lemma1" and not alpha < 1.0 / (2.0 * (q + p)):
            raise ValueError(f"alpha={alpha} must be below 1/(2(q+p)) = {1.0 / (2.0 * (q + p))}")
        return alpha


@dataclass
class IcrTrace:
    """Per-iteration history; index ``n - 1`` holds outer iteration ``n``."""

    x: List[np.ndarray] = field(default_factory=list)
    mu: List[np.ndarray] = field(default_factory=list)
    objective: List[float] = field(default_factory=list)
    pruned: List[np.ndarray] = field(default_factory=list)
    residual: List[float] = field(default_factory=list)
    map_cost: List[float] = field(default_factory=list)
    inner_iterations: List[int] = field(default_factory=list)
    inner_kkt: List[float] = field(default_factory=list)
    mu0: Optional[np.ndarray] = None
    gamma_ratio: Optional[np.ndarray] = None
    rescale: float = 1.0

    def __len__(self):
        return len(self.x)

    def to_dict(self, include_iterates: bool = True) -> dict:
        d = {
            "objective": list(self.objective),
            "residual": list(self.residual),
            "map_cost": list(self.map_cost),
            "inner_iterations": list(self.inner_iterations),
            "inner_kkt": list(self.inner_kkt),
            "pruned_count": [int(np.count_nonzero(m)) for m in self.pruned],
            "rescale": self.rescale,
        }
        if self.gamma_ratio is not None:
            d["gamma_ratio"] = self.gamma_ratio.tolist()
        if include_iterates:
            d["x"] = [v.tolist() for v in self.x]
            d["mu"] = [v.tolist() for v in self.mu]
        return d


def lemma1_prune(mu, rho, alpha: float) -> np.ndarray:
    """Indices ``j`` with ``|mu_j| < alpha * rho_j`` (strict)."""
    mu = np.asarray(mu, dtype=float)
    rho = np.asarray(rho, dtype=float)
    return np.flatnonzero(np.abs(mu) < alpha * rho)


def icr_solve(model: MeasurementModel, prior: SpikeSlabPrior, config: IcrConfig = IcrConfig()):
    """Run ICR; returns ``(RecoverySolution, IcrTrace)``.

    With ``pruning="lemma1"`` the observation is rescaled to ``||y||_inf <= 1``
    before iterating (and the result scaled back); the factor is recorded in
    ``trace.rescale``. Unit-norm columns are required in that mode.
    """
    if prior.p != model.p:
        raise ValueError(f"prior has {prior.p} coefficients, model has {model.p}")
    rho = compute_rho(prior, config.on_nonsparsifying)
    # a non-positive rho never penalises activation: the coordinate is always on
    rho_eff = np.maximum(rho, 0.0)

    A, y = model.design_matrix, model.observation
    scale = 1.0
    alpha = None
    if config.pruning == "lemma1":
        if not model.unit_columns:
            norms = np.linalg.norm(A, axis=0)
            if np.max(np.abs(norms - 1.0)) > 1e-9:
                raise ValueError("pruning requires unit-norm columns")
        ymax = float(np.max(np.abs(y))) if y.size else 0.0
        if ymax > 1.0:
            scale = ymax
            log.info("rescaling observation by 1/%.6g for pruning", scale)
        alpha = config.resolved_alpha(model.q, model.p)
    y_work = y / scale
    # rescaling y by 1/s scales x by 1/s; the l0 penalty must scale by 1/s^2
    rho_work = rho_eff / scale**2

    Q = QuadraticForm.from_least_squares(A, y_work, prior.lam)
    L = safe_lipschitz(Q)
    p = model.p
    settings = config.settings
    nonneg = config.variant == "nonnegative"

    trace = IcrTrace(rescale=scale)
    mu = A.T @ y_work
    trace.mu0 = mu.copy()
    total = np.zeros(p)
    x_prev = np.zeros(p)
    pruned = np.zeros(p, dtype=bool)
    best = None
    converged = False
    n = 0
    for n in range(1, config.max_outer_iters + 1):
        if alpha is not None:
            pruned = pruned.copy()
            pruned[lemma1_prune(mu, rho_work, alpha)] = True
        denom = np.maximum(np.abs(mu), config.mu_floor)
        w = rho_work / denom
        if nonneg:
            res = solve_nonneg_linear_quadratic(
                Q, w, settings, x0=x_prev, lipschitz=L, pinned=pruned
            )
            f_n = res.objective - Q.constant
        else:
            wp = np.where(pruned, np.inf, w)
            res = solve_weighted_l1_quadratic(Q, wp, settings, x0=x_prev, lipschitz=L)
            f_n = res.objective - Q.constant
        if not res.converged:
            log.warning("inner solver stopped at KKT %.3g in outer iteration %d", res.kkt, n)
        x = res.x
        total += x
        mu = total / n
        resid = float(np.linalg.norm(x - x_prev)) / max(1.0, float(np.linalg.norm(x)))
        x_out = x * scale
        gamma = hard_round(x_out)
        cost = map_cost(x_out, gamma, model, prior)

        trace.x.append(x_out)
        trace.mu.append(mu * scale)
        trace.objective.append(f_n * scale**2)
        trace.pruned.append(pruned)
        trace.residual.append(resid)
        trace.map_cost.append(cost)
        trace.inner_iterations.append(res.iterations)
        trace.inner_kkt.append(res.kkt)

        if best is None or cost < best[0]:
            best = (cost, n - 1)
        if resid <= config.tol:
            converged = True
            break
        x_prev = x

    if converged:
        idx = len(trace) - 1
    else:
        log.warning("ICR hit max_outer_iters=%d without meeting tol", config.max_outer_iters)
        idx = best[1]
    x_star = trace.x[idx]
    mu_star = trace.mu[idx]
    with np.errstate(divide="ignore", invalid="ignore"):
        trace.gamma_ratio = np.where(mu_star != 0, x_star / mu_star, 0.0)
    sol = RecoverySolution.from_x(
        x_star,
        model,
        prior,
        iterations=n,
        converged=converged,
        method="icr-nn" if nonneg else "icr",
        info={"pruned": int(np.count_nonzero(trace.pruned[-1])), "rescale": scale},
    )
    return sol, trace


@dataclass
class IcrDiagnostics:
    """Quasi-Cauchy check on the optimal subproblem values ``a_n = f_n(x^(n))``."""

    d: np.ndarray
    n_times_d: np.ndarray
    tail_sup: float
    tail_growth: float
    flagged: bool
    final_residual: float

    def to_dict(self):
        return {
            "tail_sup": self.tail_sup,
            "tail_growth": self.tail_growth,
            "flagged": self.flagged,
            "final_residual": self.final_residual,
            "n_iterations": int(self.d.size + 1),
        }


def icr_diagnostics(trace: IcrTrace, growth_limit: float = 10.0) -> IcrDiagnostics:
    """Sequence ``d_n = |a_{n+1} - a_n|`` and the tail behaviour of ``n d_n``.

    The tail is the last half of the ``d`` sequence. Growth compares the largest
    ``n d_n`` in the tail to its first value; values below
    ``1e-12 max(1, |a_n|)`` count as numerical zero.
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    a = np.asarray(trace.objective, dtype=float)
    d = np.abs(np.diff(a))
    n = np.arange(1, d.size + 1, dtype=float)
    nd = n * d
    final_res = float(trace.residual[-1])
    if d.size == 0:
        return IcrDiagnostics(d, nd, 0.0, 1.0, False, final_res)
    start = d.size // 2
    tail = nd[start:]
    floor = 1e-12 * max(1.0, float(np.max(np.abs(a)))) * n[start:]
    tail = np.where(tail <= floor, 0.0, tail)
    base = tail[0]
    top = float(np.max(tail))
    if top == 0.0:
        growth = 1.0
    elif base == 0.0:
        growth = math.inf
    else:
        growth = top / base
    return IcrDiagnostics(d, nd, top, growth, growth > growth_limit, final_res)
