"""Measurement model, spike-and-slab prior and the MAP objective.

The MAP problem for the hierarchical model

    y | x ~ N(Ax, sigma^2 I)
    x_i | gamma_i ~ gamma_i N(0, sigma^2 / lam) + (1 - gamma_i) delta_0
    gamma_i ~ Bernoulli(kappa_i)

reduces to minimising

    L(x, gamma) = ||y - Ax||^2 + lam ||x||^2 + sum_i rho_i gamma_i

with rho_i = sigma^2 log(2 pi sigma^2 (1 - kappa_i)^2 / (lam kappa_i^2)).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

UNIT_COLUMN_TOL = 1e-9


class DimensionError(ValueError):
    """Array shapes disagree."""


class NonSparsifyingPrior(ValueError):
    """Some rho_i <= 0, so activating that coefficient is never penalised."""

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(int(i) for i in indices)


class NonSparsifyingPriorWarning(UserWarning):
    pass


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MeasurementModel:
    """The triple (A, y, sigma) of ``y = A x + n``.

    ``noise_sigma`` may be zero for noiseless synthetic instances; the prior
    carries its own (strictly positive) sigma.
    """

    design_matrix: np.ndarray
    observation: np.ndarray
    noise_sigma: float
    unit_columns: bool = False

    def __post_init__(self):
        A = np.asarray(self.design_matrix, dtype=float)
        y = np.asarray(self.observation, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
            raise DimensionError(f"design matrix must be a non-empty 2-D array, got shape {A.shape}")
        if y.shape[0] != A.shape[0]:
            raise DimensionError(
                f"observation length {y.shape[0]} does not match {A.shape[0]} rows"
            )
        if not np.all(np.isfinite(A)) or not np.all(np.isfinite(y)):
            raise ValueError("design matrix and observation must be finite")
        if not (self.noise_sigma >= 0 and math.isfinite(self.noise_sigma)):
            raise ValueError(f"noise_sigma must be finite and >= 0, got {self.noise_sigma}")
        if self.unit_columns:
            norms = np.linalg.norm(A, axis=0)
            worst = float(np.max(np.abs(norms - 1.0)))
            if worst > UNIT_COLUMN_TOL:
                raise ValueError(f"unit_columns set but a column norm is off by {worst:.3g}")
        object.__setattr__(self, "design_matrix", _frozen(A))
        object.__setattr__(self, "observation", _frozen(y))
        object.__setattr__(self, "noise_sigma", float(self.noise_sigma))

    @property
    def q(self) -> int:
        return self.design_matrix.shape[0]

    @property
    def p(self) -> int:
        return self.design_matrix.shape[1]

    def with_observation(self, y) -> "MeasurementModel":
        return MeasurementModel(self.design_matrix, y, self.noise_sigma, self.unit_columns)


@dataclass(frozen=True, eq=False)
class SpikeSlabPrior:
    """Per-coefficient activation probabilities plus slab precision and noise level."""

    kappa: np.ndarray
    lam: float
    sigma: float

    def __post_init__(self):
        kappa = np.asarray(self.kappa, dtype=float).reshape(-1)
        if kappa.size < 1:
            raise ValueError("kappa must be non-empty")
        if not np.all((kappa > 0) & (kappa < 1)):
            raise ValueError("every kappa_i must lie strictly inside (0, 1)")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        object.__setattr__(self, "kappa", _frozen(kappa))
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "sigma", float(self.sigma))

    @classmethod
    def uniform(cls, p: int, kappa: float, lam: float, sigma: float) -> "SpikeSlabPrior":
        return cls(np.full(p, float(kappa)), lam, sigma)

    @property
    def p(self) -> int:
        return self.kappa.shape[0]

    @cached_property
    def rho(self) -> np.ndarray:
        """Raw penalty weights; may contain non-positive entries."""
        s2 = self.sigma**2
        k = self.kappa
        r = s2 * np.log(2.0 * math.pi * s2 * (1.0 - k) ** 2 / (self.lam * k**2))
        r.setflags(write=False)
        return r


def compute_rho(prior: SpikeSlabPrior, on_nonsparsifying: str = "error") -> np.ndarray:
    """Activation penalties ``rho_i`` of the prior.

    ``on_nonsparsifying`` is ``"error"`` (raise :class:`NonSparsifyingPrior`),
    ``"warn"`` or ``"ignore"`` and applies when any ``rho_i <= 0``.
    """
    rho = prior.rho
    bad = np.flatnonzero(rho <= 0)
    if bad.size:
        msg = (
            f"{bad.size} of {rho.size} activation penalties are <= 0 "
            f"(min rho = {rho.min():.4g}); the prior does not favour sparsity"
        )
        if on_nonsparsifying == "error":
            raise NonSparsifyingPrior(msg, bad)
        if on_nonsparsifying == "warn":
            warnings.warn(msg, NonSparsifyingPriorWarning, stacklevel=2)
        elif on_nonsparsifying != "ignore":
            raise ValueError(f"unknown policy {on_nonsparsifying!r}")
    return np.array(rho)


def _check_dims(x, gamma, model, prior):
    x = np.asarray(x, dtype=float).reshape(-1)
    gamma = np.asarray(gamma).reshape(-1)
    p = model.p
    if x.shape[0] != p or gamma.shape[0] != p or prior.p != p:
        raise DimensionError(
            f"dimension mismatch: p={p}, len(x)={x.shape[0]}, "
            f"len(gamma)={gamma.shape[0]}, len(kappa)={prior.p}"
        )
    if not np.all((gamma == 0) | (gamma == 1)):
        raise ValueError("gamma entries must be 0 or 1")
    return x, gamma.astype(float)


def map_cost(x, gamma, model: MeasurementModel, prior: SpikeSlabPrior) -> float:
    """``||y - Ax||^2 + lam ||x||^2 + sum rho_i gamma_i``, no hidden scaling."""
    x, gamma = _check_dims(x, gamma, model, prior)
    r = model.observation - model.design_matrix @ x
    return float(r @ r + prior.lam * (x @ x) + prior.rho @ gamma)


def log_posterior(x, gamma, model: MeasurementModel, prior: SpikeSlabPrior) -> float:
    """Log posterior of ``(x, gamma)`` up to an additive constant.

    The dropped constant is ``-(q/2) log(2 pi sigma^2)`` from the likelihood
    normaliser. The ``sum log(1 - kappa_i)`` part of the Bernoulli term is kept.
    Returns ``-inf`` when ``gamma_i = 0`` but ``x_i != 0``.
    """
    x, gamma = _check_dims(x, gamma, model, prior)
    if np.any((gamma == 0) & (x != 0)):
        return -math.inf
    s2 = prior.sigma**2
    r = model.observation - model.design_matrix @ x
    loglik = -(r @ r) / (2.0 * s2)
    active = gamma == 1
    logslab = np.sum(
        -0.5 * math.log(2.0 * math.pi * s2 / prior.lam) - prior.lam * x[active] ** 2 / (2.0 * s2)
    )
    k = prior.kappa
    logbern = np.sum(gamma * np.log(k) + (1.0 - gamma) * np.log1p(-k))
    return float(loglik + logslab + logbern)


def hard_round(x, zero_threshold: Optional[float] = None) -> np.ndarray:
    """Binary activation pattern ``1{|x_i| > thr}``."""
    x = np.asarray(x, dtype=float)
    if zero_threshold is None:
        zero_threshold = default_zero_threshold(x)
    return (np.abs(x) > zero_threshold).astype(np.int8)


def default_zero_threshold(*vectors) -> float:
    scale = 1.0
    for v in vectors:
        v = np.asarray(v, dtype=float)
        if v.size:
            scale = max(scale, float(np.max(np.abs(v))))
    return 1e-6 * scale


@dataclass
class RecoverySolution:
    """Recovered coefficients with their hard-rounded activation pattern."""

    x: np.ndarray
    gamma: np.ndarray
    cost: float
    iterations: int = 0
    converged: bool = True
    method: str = ""
    info: dict = field(default_factory=dict)

    @classmethod
    def from_x(cls, x, model, prior, *, iterations=0, converged=True, method="", info=None,
               zero_threshold=None):
        x = np.asarray(x, dtype=float)
        gamma = hard_round(x, zero_threshold)
        return cls(
            x=x,
            gamma=gamma,
            cost=map_cost(x, gamma, model, prior),
            iterations=iterations,
            converged=converged,
            method=method,
            info=info or {},
        )

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.gamma)
