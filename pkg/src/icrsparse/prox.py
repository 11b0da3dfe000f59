"""Convex subproblem solvers.

Both solvers minimise a strongly convex quadratic ``x'Gx + c'x + const``
plus either a weighted l1 term or a linear penalty under ``x >= 0``. They
share one engine: accelerated proximal gradient with a fixed step
``1 / (1.01 L)`` and function-value restart, interleaved with an exact
reduced solve on the current support. The reduced solve is accepted only when
it is sign-consistent and passes the KKT check, so the returned point always
carries a certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


class SolverError(RuntimeError):
    pass


class NonFiniteInput(SolverError, ValueError):
    pass


class PowerIterationStall(SolverError):
    pass


class MaxItersExceeded(SolverError):
    """Raised only on request; solvers normally return ``converged=False``."""


@dataclass(frozen=True, eq=False)
class QuadraticForm:
    """``x' gram x + linear' x + constant``; ``gram`` is symmetric PSD."""

    gram: np.ndarray
    linear: np.ndarray
    constant: float = 0.0

    def __post_init__(self):
        G = np.asarray(self.gram, dtype=float)
        c = np.asarray(self.linear, dtype=float).reshape(-1)
        if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape[0] != c.shape[0]:
            raise ValueError(f"incompatible gram {G.shape} and linear {c.shape}")
        if not (np.all(np.isfinite(G)) and np.all(np.isfinite(c)) and math.isfinite(self.constant)):
            raise NonFiniteInput("quadratic form has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(G))) if G.size else 1.0)
        if np.max(np.abs(G - G.T), initial=0.0) > 1e-10 * scale:
            raise ValueError("gram must be symmetric")
        object.__setattr__(self, "gram", G)
        object.__setattr__(self, "linear", c)
        object.__setattr__(self, "constant", float(self.constant))

    @classmethod
    def from_least_squares(cls, A, y, l2: float = 0.0) -> "QuadraticForm":
        """``||y - Ax||^2 + l2 ||x||^2`` expanded."""
        A = np.asarray(A, dtype=float)
        y = np.asarray(y, dtype=float).reshape(-1)
        G = A.T @ A
        G = 0.5 * (G + G.T)
        if l2:
            G[np.diag_indices_from(G)] += l2
        return cls(G, -2.0 * (A.T @ y), float(y @ y))

    @property
    def p(self) -> int:
        return self.linear.shape[0]

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ (self.gram @ x) + self.linear @ x + self.constant)

    def gradient(self, x) -> np.ndarray:
        return 2.0 * (self.gram @ x) + self.linear

    def restrict(self, idx) -> "QuadraticForm":
        idx = np.asarray(idx)
        return QuadraticForm(self.gram[np.ix_(idx, idx)], self.linear[idx], self.constant)


@dataclass(frozen=True)
class SolverSettings:
    max_inner_iters: int = 2000
    kkt_tolerance: float = 1e-8
    step_rule: str = "fixed-step-from-Lipschitz"
    # iterations between certificate checks / support polishing attempts
    check_every: int = 5

    def __post_init__(self):
        if self.max_inner_iters < 1:
            raise ValueError("max_inner_iters must be positive")
        if not self.kkt_tolerance > 0:
            raise ValueError("kkt_tolerance must be positive")
        if self.step_rule != "fixed-step-from-Lipschitz":
            raise ValueError(f"unsupported step rule {self.step_rule!r}")


@dataclass
class ProxResult:
    x: np.ndarray
    kkt: float
    iterations: int
    converged: bool
    objective: float


def lipschitz_estimate(Q, max_iter: Optional[int] = None, rtol: float = 1e-7) -> float:
    """Lipschitz constant ``2 lambda_max(gram)`` of the quadratic's gradient.

    Power iteration from a fixed start vector, stopped when the Rayleigh
    quotient changes by less than ``rtol`` (relative). Accepts a
    :class:`QuadraticForm` or a bare gram matrix. The default budget is
    ``max(10 p, 1000)`` iterations.
    """
    G = Q.gram if isinstance(Q, QuadraticForm) else np.asarray(Q, dtype=float)
    p = G.shape[0]
    if max_iter is None:
        max_iter = max(10 * p, 1000)
    # fixed, generic start vector (no component is structurally zero)
    v = 1.0 + 0.5 * np.cos(np.arange(1, p + 1) * 1.618033988749895)
    v /= np.linalg.norm(v)
    rq_prev = None
    for _ in range(max(max_iter, 2)):
        w = G @ v
        rq = float(v @ w)
        nrm = float(np.linalg.norm(w))
        if nrm == 0.0:
            return 0.0
        if rq_prev is not None and abs(rq - rq_prev) <= rtol * max(abs(rq), 1e-300):
            return 2.0 * rq
        rq_prev = rq
        v = w / nrm
    raise PowerIterationStall(f"power iteration did not settle in {max_iter} iterations")


def safe_lipschitz(Q) -> float:
    """Power-iteration estimate, or a guaranteed upper bound if it stalls.

    The fallback ``2 min(max row sum, Frobenius norm)`` bounds ``2 lambda_max``
    from above, so the fixed step stays stable at the cost of speed.
    """
    try:
        return lipschitz_estimate(Q)
    except PowerIterationStall:
        G = Q.gram if isinstance(Q, QuadraticForm) else np.asarray(Q, dtype=float)
        return 2.0 * min(float(np.abs(G).sum(axis=1).max()), float(np.linalg.norm(G)))


def _soft(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def kkt_residual(x, Q: QuadraticForm, weights, mode: str = "weighted_l1") -> float:
    """Infinity norm of the minimum-norm subgradient (or projected gradient).

    ``mode="weighted_l1"``: objective ``Q(x) + sum w_i |x_i|`` with ``w_i`` in
    ``[0, inf]``. ``mode="nonneg"``: objective ``Q(x) + penalty' x`` over
    ``x >= 0``; ``weights`` is the linear penalty.
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(weights, dtype=float)
    if mode == "weighted_l1":
        pinned = np.isinf(w)
        if np.any(pinned & (x != 0)):
            return math.inf
        g = Q.gradient(x)
        wf = np.where(pinned, 0.0, w)
        r = np.where(x != 0, np.abs(g + wf * np.sign(x)), np.maximum(np.abs(g) - wf, 0.0))
        r[pinned] = 0.0
    elif mode == "nonneg":
        if np.any(x < 0):
            return math.inf
        g = Q.gradient(x) + w
        r = np.where(x > 0, np.abs(g), np.maximum(-g, 0.0))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return float(np.max(r, initial=0.0))


class _Engine:
    """Shared accelerated proximal-gradient loop over the free coordinates."""

    def __init__(self, Q, settings, lipschitz):
        self.Q = Q
        self.settings = settings
        L = lipschitz if lipschitz is not None else safe_lipschitz(Q)
        self.step = 1.0 / (1.01 * L) if L > 0 else 1.0

    def run(self, x0, prox, penalty_value, polish, kkt):
        Q, s = self.Q, self.settings
        G, c = Q.gram, Q.linear
        x = prox(np.array(x0, dtype=float), 0.0)
        Gx = G @ x
        F = float(x @ Gx + c @ x) + penalty_value(x)
        y, Gy, t = x, Gx, 1.0
        best = (math.inf, x)
        it = 0
        res = kkt(x)
        if res <= s.kkt_tolerance:
            return x, res, 0, True
        last_support = None
        while it < s.max_inner_iters:
            it += 1
            g = 2.0 * Gy + c
            x_new = prox(y - self.step * g, self.step)
            Gx_new = G @ x_new
            F_new = float(x_new @ Gx_new + c @ x_new) + penalty_value(x_new)
            if F_new > F:
                # restart from the last accepted point; next step is plain prox-gradient
                y, Gy, t = x, Gx, 1.0
            else:
                t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
                beta = (t - 1.0) / t_new
                y = x_new + beta * (x_new - x)
                Gy = Gx_new + beta * (Gx_new - Gx)
                x, Gx, F, t = x_new, Gx_new, F_new, t_new
            if it % s.check_every == 0:
                res = kkt(x)
                if res < best[0]:
                    best = (res, x)
                if res <= s.kkt_tolerance:
                    return x, res, it, True
                support = x != 0
                if last_support is not None and np.array_equal(support, last_support):
                    xp = polish(x)
                    if xp is not None:
                        rp = kkt(xp)
                        if rp <= s.kkt_tolerance:
                            return xp, rp, it, True
                        if rp < best[0]:
                            best = (rp, xp)
                last_support = support
        res = kkt(x)
        if res < best[0]:
            best = (res, x)
        return best[1], best[0], it, best[0] <= s.kkt_tolerance


def _reduced_solve(G, rhs, idx):
    if idx.size == 0:
        return np.zeros(0)
    try:
        return np.linalg.solve(2.0 * G[np.ix_(idx, idx)], rhs)
    except np.linalg.LinAlgError:
        return None


def solve_weighted_l1_quadratic(
    Q: QuadraticForm,
    weights,
    settings: SolverSettings = SolverSettings(),
    x0=None,
    lipschitz: Optional[float] = None,
    raise_on_maxiter: bool = False,
) -> ProxResult:
    """Minimise ``x'Gx + c'x + sum w_i |x_i|``.

    Infinite weights pin their coordinate to exactly zero; those coordinates
    are removed from the problem before iterating.
    """
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.shape[0] != Q.p:
        raise ValueError("weights length does not match the quadratic form")
    if np.any(np.isnan(w)) or np.any(w < 0):
        raise NonFiniteInput("weights must be non-negative (inf allowed)")
    free = np.flatnonzero(np.isfinite(w))
    x_full = np.zeros(Q.p)
    if free.size == 0:
        return ProxResult(x_full, 0.0, 0, True, Q.value(x_full))
    Qr = Q if free.size == Q.p else Q.restrict(free)
    wr = w[free]
    start = np.zeros(free.size) if x0 is None else np.asarray(x0, dtype=float).reshape(-1)[free]
    G, c = Qr.gram, Qr.linear

    def prox(z, step):
        return _soft(z, step * wr)

    def penalty(x):
        return float(wr @ np.abs(x))

    def kkt(x):
        return kkt_residual(x, Qr, wr, "weighted_l1")

    def polish(x):
        idx = np.flatnonzero(x)
        sgn = np.sign(x[idx])
        z = _reduced_solve(G, -(c[idx] + wr[idx] * sgn), idx)
        if z is None or np.any(np.sign(z) != sgn):
            return None
        out = np.zeros_like(x)
        out[idx] = z
        return out

    eng = _Engine(Qr, settings, lipschitz)
    x, res, it, ok = eng.run(start, prox, penalty, polish, kkt)
    if not ok and raise_on_maxiter:
        raise MaxItersExceeded(f"KKT residual {res:.3g} after {it} iterations")
    x_full[free] = x
    obj = Q.value(x_full) + float(np.sum(wr * np.abs(x)))
    return ProxResult(x_full, res, it, ok, obj)


def solve_nonneg_linear_quadratic(
    Q: QuadraticForm,
    linear_penalty,
    settings: SolverSettings = SolverSettings(),
    x0=None,
    lipschitz: Optional[float] = None,
    pinned=None,
    raise_on_maxiter: bool = False,
) -> ProxResult:
    """Minimise ``x'Gx + (c + penalty)'x`` subject to ``x >= 0``.

    ``pinned`` is an optional boolean mask of coordinates fixed at zero.
    """
    v = np.asarray(linear_penalty, dtype=float).reshape(-1)
    if v.shape[0] != Q.p:
        raise ValueError("penalty length does not match the quadratic form")
    if not np.all(np.isfinite(v)):
        raise NonFiniteInput("linear penalty must be finite")
    x_full = np.zeros(Q.p)
    free = np.arange(Q.p) if pinned is None else np.flatnonzero(~np.asarray(pinned, dtype=bool))
    if free.size == 0:
        return ProxResult(x_full, 0.0, 0, True, Q.value(x_full))
    Qr = Q if free.size == Q.p else Q.restrict(free)
    vr = v[free]
    # fold the penalty into the linear term
    Qp = QuadraticForm(Qr.gram, Qr.linear + vr, Qr.constant)
    start = np.zeros(free.size) if x0 is None else np.asarray(x0, dtype=float).reshape(-1)[free]
    G, c = Qp.gram, Qp.linear

    def prox(z, step):
        return np.maximum(z, 0.0)

    def penalty(x):
        return 0.0

    def kkt(x):
        return kkt_residual(x, Qp, np.zeros_like(x), "nonneg")

    def polish(x):
        idx = np.flatnonzero(x > 0)
        z = _reduced_solve(G, -c[idx], idx)
        if z is None or np.any(z <= 0):
            return None
        out = np.zeros_like(x)
        out[idx] = z
        return out

    eng = _Engine(Qp, settings, lipschitz)
    x, res, it, ok = eng.run(np.maximum(start, 0.0), prox, penalty, polish, kkt)
    if not ok and raise_on_maxiter:
        raise MaxItersExceeded(f"projected KKT residual {res:.3g} after {it} iterations")
    x_full[free] = x
    return ProxResult(x_full, res, it, ok, Q.value(x_full) + float(v @ x_full))
