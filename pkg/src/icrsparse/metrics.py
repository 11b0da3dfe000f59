"""Figures of merit and their aggregation over realizations.

Conventions:
  * MSE is mean-normalised, ``||x - ref||^2 / p``; ``mse_sum`` is the
    un-normalised ``||x - ref||^2`` and reports always carry both.
  * Support match is per-index agreement of the zero/nonzero status, in
    percent of p.
  * A coefficient counts as nonzero when ``|x_i| > thr`` with
    ``thr = 1e-6 * max(1, ||x||_inf, ||ref||_inf)`` unless given.
"""

from __future__ import annotations

import statistics
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

import numpy as np

from icrsparse.model import default_zero_threshold


def _pair(x, reference):
    x = np.asarray(x, dtype=float).reshape(-1)
    r = np.asarray(reference, dtype=float).reshape(-1)
    if x.shape != r.shape:
        raise ValueError(f"length mismatch: {x.shape[0]} vs {r.shape[0]}")
    return x, r


def mse(x, reference) -> float:
    x, r = _pair(x, reference)
    d = x - r
    return float(d @ d) / x.size


def mse_sum(x, reference) -> float:
    x, r = _pair(x, reference)
    d = x - r
    return float(d @ d)


def support_match(x, reference, zero_threshold: Optional[float] = None) -> float:
    x, r = _pair(x, reference)
    thr = default_zero_threshold(x, r) if zero_threshold is None else zero_threshold
    if not thr > 0:
        raise ValueError("zero_threshold must be positive")
    agree = (np.abs(x) > thr) == (np.abs(r) > thr)
    return 100.0 * float(np.count_nonzero(agree)) / x.size


def sparsity_level(x, zero_threshold: Optional[float] = None) -> int:
    x = np.asarray(x, dtype=float).reshape(-1)
    thr = default_zero_threshold(x) if zero_threshold is None else zero_threshold
    return int(np.count_nonzero(np.abs(x) > thr))


@dataclass
class EvalReport:
    """Per-method summary over realizations (means, median wall time)."""

    method: str
    avg_cost: float
    mse: float
    mse_sum: float
    support_match_pct: float
    sparsity_level: float
    wall_time_s: float
    n_realizations: int
    mse_vs_global: Optional[float] = None
    support_match_vs_global_pct: Optional[float] = None
    converged_pct: Optional[float] = None

    def to_dict(self):
        return asdict(self)


def _mean(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def summarize(method: str, rows: Iterable[dict]) -> EvalReport:
    """Aggregate per-realization metric rows (as written to the CSV)."""
    rows = list(rows)
    if not rows:
        raise ValueError(f"no rows for method {method!r}")
    times = [r["wall_time_s"] for r in rows if r.get("wall_time_s") is not None]

    def col(name):
        return [r.get(name) for r in rows]

    return EvalReport(
        method=method,
        avg_cost=_mean(col("cost")),
        mse=_mean(col("mse_vs_x0")),
        mse_sum=_mean(col("mse_sum_vs_x0")),
        support_match_pct=_mean(col("sm_vs_x0")),
        sparsity_level=_mean(col("sparsity")),
        wall_time_s=float(statistics.median(times)) if times else 0.0,
        n_realizations=len(rows),
        mse_vs_global=_mean(col("mse_vs_global")),
        support_match_vs_global_pct=_mean(col("sm_vs_global")),
        converged_pct=_mean([100.0 * bool(c) for c in col("converged") if c is not None]),
    )
