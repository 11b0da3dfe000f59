"""Seeded benchmark runner behind the ``synth-bench``, ``sweep`` and ``mnist`` commands.

Realization ``i`` of a run with master seed ``s`` uses instance seed
``derive_realization_seed(s, i)``, so results do not depend on which worker
process handles it. Rows are sorted by ``(realization, method)`` before
writing and carry no timings, which makes the CSV byte-identical across
thread counts. Wall times go to the JSON summary only (median per method).
"""

from __future__ import annotations

import json
import math
import multiprocessing
import os
import statistics
import subprocess
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from threadpoolctl import threadpool_limits

from icrsparse import __version__
from icrsparse.baselines import ElasticNetParams, elastic_net, lasso
from icrsparse.config import ExperimentConfig
from icrsparse.icr import icr_solve
from icrsparse.metrics import mse, mse_sum, sparsity_level, summarize, support_match
from icrsparse.mnist import DEFAULT_KAPPA, image_prior, read_idx_images, solve_image, write_pgm
from icrsparse.model import NonSparsifyingPriorWarning, SpikeSlabPrior, compute_rho
from icrsparse.oracle import OracleConfig, global_map
from icrsparse.synth import SynthSpec, derive_realization_seed, generate

BENCH_COLUMNS = (
    "realization", "method", "seed", "cost", "mse_vs_x0", "mse_sum_vs_x0", "sm_vs_x0",
    "sparsity", "mse_vs_global", "sm_vs_global", "iterations", "converged",
)
MNIST_COLUMNS = ("image", "method", "seed", "mse", "sparsity", "cost", "iterations", "converged")
SWEEP_COLUMNS = ("grid_param", "grid_value", "method", "metric", "value")
SWEEP_METRICS = ("avg_cost", "mse", "mse_sum", "support_match_pct", "sparsity_level",
                 "support_match_vs_global_pct", "mse_vs_global")
MNIST_METHODS = ("icr-nn", "icr", "enet")


def version_string() -> str:
    """Package version, suffixed with ``git describe`` output when available."""
    try:
        out = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return __version__
    desc = out.stdout.strip()
    return f"{__version__}+{desc}" if out.returncode == 0 and desc else __version__


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, columns, rows) -> None:
    lines = [",".join(columns)]
    lines += [",".join(_fmt(r.get(c)) for c in columns) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _clean(o):
    # non-finite floats become null so the output stays strict JSON
    if isinstance(o, float) and not math.isfinite(o):
        return None
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def write_json(path, obj) -> None:
    text = json.dumps(_clean(json.loads(json.dumps(obj, default=_json_default))),
                      indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")


def resolve_out_dir(cfg: ExperimentConfig, env: Optional[dict] = None) -> Path:
    env = os.environ if env is None else env
    root = cfg.out_dir or env.get("ICR_OUT_DIR") or "icr-out"
    return Path(root)


def synth_prior(cfg: ExperimentConfig) -> SpikeSlabPrior:
    kappa = cfg.k / cfg.p if cfg.kappa is None else cfg.kappa
    lam = cfg.sigma**2 if cfg.lam is None else cfg.lam
    return SpikeSlabPrior.uniform(cfg.p, kappa, lam, cfg.sigma)


def _oracle_enabled(cfg: ExperimentConfig) -> bool:
    if cfg.oracle == "on":
        return True
    if cfg.oracle == "off":
        return False
    return cfg.p <= cfg.oracle_max_p


def _bench_methods(cfg: ExperimentConfig) -> List[str]:
    methods = [m for m in cfg.methods if m != "oracle"]
    if _oracle_enabled(cfg):
        methods.append("oracle")
    return methods


def _row(index, seed, method, sol, x0, ref, elapsed):
    r = {
        "realization": index,
        "method": method,
        "seed": seed,
        "cost": sol.cost,
        "mse_vs_x0": mse(sol.x, x0),
        "mse_sum_vs_x0": mse_sum(sol.x, x0),
        "sm_vs_x0": support_match(sol.x, x0),
        "sparsity": sparsity_level(sol.x),
        "iterations": sol.iterations,
        "converged": bool(sol.converged),
        "wall_time_s": elapsed,
    }
    if ref is not None:
        r["mse_vs_global"] = mse(sol.x, ref)
        r["sm_vs_global"] = support_match(sol.x, ref)
    return r


def run_realization(cfg: ExperimentConfig, index: int) -> List[dict]:
    """Generate realization ``index`` and solve it with every configured method."""
    seed = derive_realization_seed(cfg.seed, index)
    spec = SynthSpec(p=cfg.p, q=cfg.q, k=cfg.k, sigma=cfg.sigma, seed=seed,
                     amplitude_dist=cfg.amplitude_dist, unit_columns=cfg.unit_columns)
    model, x0 = generate(spec)
    prior = synth_prior(cfg)
    rho = compute_rho(prior, cfg.on_nonsparsifying)
    settings = cfg.solver_settings()
    methods = _bench_methods(cfg)

    refs: Dict[bool, np.ndarray] = {}
    solutions = {}
    times = {}

    def reference(nonneg):
        # the non-negative variant is compared against the non-negative global MAP
        if nonneg not in refs:
            t0 = time.perf_counter()
            sol = global_map(model, prior, OracleConfig(max_p=cfg.oracle_max_p, nonneg=nonneg))
            if not nonneg:
                times["oracle"] = time.perf_counter() - t0
                solutions["oracle"] = sol
            refs[nonneg] = sol.x
        return refs[nonneg]

    for method in methods:
        t0 = time.perf_counter()
        if method == "icr":
            sol, _ = icr_solve(model, prior, cfg.icr_config("unconstrained"))
        elif method == "icr-nn":
            sol, _ = icr_solve(model, prior, cfg.icr_config("nonnegative"))
        elif method == "enet":
            l1 = max(float(np.mean(rho)), 0.0) if cfg.enet_l1 is None else cfg.enet_l1
            l2 = prior.lam if cfg.enet_l2 is None else cfg.enet_l2
            sol = elastic_net(model, ElasticNetParams(l1, l2), settings, prior)
        elif method == "lasso":
            l1 = float(np.mean(rho)) if cfg.lasso_l1 is None else cfg.lasso_l1
            if not l1 > 0:
                # mean(rho) <= 0 only happens under a downgraded non-sparsifying prior
                warnings.warn("lasso skipped: default l1 weight mean(rho) is not positive",
                              NonSparsifyingPriorWarning)
                continue
            sol = lasso(model, l1, settings, prior)
        elif method == "oracle":
            reference(False)
            continue
        else:
            raise ValueError(f"unknown method {method!r}")
        times[method] = time.perf_counter() - t0
        solutions[method] = sol

    rows = []
    for method, sol in solutions.items():
        ref = None
        if _oracle_enabled(cfg):
            ref = reference(method == "icr-nn")
        rows.append(_row(index, seed, method, sol, x0, ref, times[method]))
    return rows


def _run_chunk(args):
    cfg, indices = args
    out = []
    with threadpool_limits(limits=1), warnings.catch_warnings():
        warnings.simplefilter("ignore", NonSparsifyingPriorWarning)
        for i in indices:
            out.extend(run_realization(cfg, i))
    return out


def parallel_map_chunks(fn, cfg, indices, threads):
    """Apply ``fn((cfg, chunk))`` over index chunks, in worker processes if threads > 1."""
    indices = list(indices)
    if threads <= 1 or len(indices) <= 1:
        return fn((cfg, indices))
    n = min(threads, len(indices))
    chunks = [indices[j::n] for j in range(n)]
    ctx = multiprocessing.get_context("spawn")
    out = []
    with ProcessPoolExecutor(max_workers=n, mp_context=ctx) as pool:
        for part in pool.map(fn, [(cfg, c) for c in chunks]):
            out.extend(part)
    return out


def sort_rows(rows, key=("realization", "method")):
    return sorted(rows, key=lambda r: tuple(r[k] for k in key))


def _check_prior(cfg: ExperimentConfig) -> List[str]:
    notes = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NonSparsifyingPriorWarning)
        compute_rho(synth_prior(cfg), cfg.on_nonsparsifying)
    notes += [str(w.message) for w in caught]
    return notes


def run_bench(cfg: ExperimentConfig):
    """Run all realizations; returns ``(rows, reports)`` with rows sorted."""
    notes = _check_prior(cfg)
    rows = sort_rows(parallel_map_chunks(_run_chunk, cfg, range(cfg.n_realizations), cfg.threads))
    by_method: Dict[str, List[dict]] = {}
    for r in rows:
        by_method.setdefault(r["method"], []).append(r)
    reports = {m: summarize(m, rs) for m, rs in sorted(by_method.items())}
    return rows, reports, notes


def _report_header(cfg: ExperimentConfig) -> dict:
    prior = synth_prior(cfg) if cfg.command != "mnist" else None
    head = {
        "schema_version": cfg.schema_version,
        "version": version_string(),
        "master_seed": cfg.seed,
        "config": cfg.to_dict(),
        "mse_convention": "mean over p; mse_sum is the un-normalised squared error",
    }
    if prior is not None:
        head["resolved_prior"] = {"kappa": float(prior.kappa[0]), "lam": prior.lam,
                                  "sigma": prior.sigma}
    return head


def cmd_synth_bench(cfg: ExperimentConfig, out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, reports, notes = run_bench(cfg)
    write_csv(out_dir / "bench.csv", BENCH_COLUMNS, rows)
    summary = _report_header(cfg)
    summary["methods"] = {m: r.to_dict() for m, r in reports.items()}
    summary["notes"] = notes
    write_json(out_dir / "summary.json", summary)
    return summary


def run_sweep(cfg: ExperimentConfig):
    """Mean metrics per grid point and method, as tidy rows."""
    if not cfg.sweep_values:
        raise ValueError("empty sweep grid")
    tidy = []
    for v in cfg.sweep_values:
        if cfg.sweep_param == "k":
            if float(v) != int(v):
                raise ValueError(f"k grid values must be integers, got {v}")
            point = cfg.replace(k=int(v))
            value = int(v)
        else:
            point = cfg.replace(sigma=float(v))
            value = float(v)
        _, reports, _ = run_bench(point)
        for method, rep in reports.items():
            d = rep.to_dict()
            for metric in SWEEP_METRICS:
                if d.get(metric) is not None:
                    tidy.append({"grid_param": cfg.sweep_param, "grid_value": value,
                                 "method": method, "metric": metric, "value": d[metric]})
    return tidy


def cmd_sweep(cfg: ExperimentConfig, out_dir: Path) -> dict:
    tidy = run_sweep(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "sweep.csv", SWEEP_COLUMNS, tidy)
    curves: Dict[tuple, list] = {}
    for r in tidy:
        curves.setdefault((r["method"], r["metric"]), []).append((r["grid_value"], r["value"]))
    data_dir = out_dir / "curves"
    data_dir.mkdir(exist_ok=True)
    for (method, metric), pts in sorted(curves.items()):
        body = "".join(f"{_fmt(g)} {_fmt(val)}\n" for g, val in pts)
        (data_dir / f"{method}_{metric}.dat").write_text(f"# {cfg.sweep_param} {metric}\n" + body)
    summary = _report_header(cfg)
    summary["curves"] = {f"{m}_{k}": pts for (m, k), pts in sorted(curves.items())}
    write_json(out_dir / "summary.json", summary)
    return summary


def _mnist_chunk(args):
    cfg, items = args
    rows = []
    with threadpool_limits(limits=1):
        for index, image in items:
            seed = derive_realization_seed(cfg.seed, index)
            p = image.size
            kappa = DEFAULT_KAPPA if cfg.kappa is None else cfg.kappa
            prior = image_prior(p, cfg.sigma, kappa, cfg.lam)
            for method in MNIST_METHODS:
                variant = "nonnegative" if method == "icr-nn" else "unconstrained"
                t0 = time.perf_counter()
                sol, _, x = solve_image(image, cfg.q_measurements, prior, cfg.icr_config(variant),
                                        seed, cfg.sigma, "enet" if method == "enet" else "icr")
                rows.append({
                    "image": index, "method": method, "seed": seed, "mse": mse(sol.x, x),
                    "sparsity": sparsity_level(sol.x), "cost": sol.cost,
                    "iterations": sol.iterations, "converged": bool(sol.converged),
                    "wall_time_s": time.perf_counter() - t0,
                    "reconstruction": sol.x.reshape(image.shape),
                })
    return rows


def run_mnist(cfg: ExperimentConfig, images):
    stop = min(cfg.start + cfg.count, images.count)
    if cfg.start < 0 or cfg.start >= stop:
        raise ValueError(f"image range [{cfg.start}, {cfg.start + cfg.count}) is empty "
                         f"for a file with {images.count} images")
    items = [(i, images.pixels[i]) for i in range(cfg.start, stop)]
    chunks = [items[j::cfg.threads] for j in range(min(cfg.threads, len(items)))]
    if len(chunks) == 1:
        rows = _mnist_chunk((cfg, items))
    else:
        ctx = multiprocessing.get_context("spawn")
        rows = []
        with ProcessPoolExecutor(max_workers=len(chunks), mp_context=ctx) as pool:
            for part in pool.map(_mnist_chunk, [(cfg, c) for c in chunks]):
                rows.extend(part)
    return sort_rows(rows, ("image", "method"))


def mnist_summary(rows) -> dict:
    methods = {}
    for m in MNIST_METHODS:
        rs = [r for r in rows if r["method"] == m]
        methods[m] = {
            "mse": float(np.mean([r["mse"] for r in rs])),
            "sparsity_level": float(np.mean([r["sparsity"] for r in rs])),
            "avg_cost": float(np.mean([r["cost"] for r in rs])),
            "wall_time_s": float(statistics.median(r["wall_time_s"] for r in rs)),
            "n_images": len(rs),
        }
    a, b, c = (methods[m]["mse"] for m in MNIST_METHODS)
    ordering = {
        "statement": "mean MSE: icr-nn <= icr <= enet",
        "icr_nn_le_icr": a <= b,
        "icr_le_enet": b <= c,
        "holds": a <= b <= c,
    }
    return {"methods": methods, "ordering": ordering}


def cmd_mnist(cfg: ExperimentConfig, out_dir: Path) -> dict:
    if not cfg.images:
        raise FileNotFoundError("no IDX image file given (--images)")
    images = read_idx_images(cfg.images)
    rows = run_mnist(cfg, images)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "mnist.csv", MNIST_COLUMNS, rows)
    img_dir = out_dir / "images"
    img_dir.mkdir(exist_ok=True)
    for r in rows:
        if r["method"] == cfg.pgm_method:
            write_pgm(img_dir / f"image_{r['image']:05d}_{r['method']}.pgm", r["reconstruction"])
    summary = _report_header(cfg)
    summary["resolved_prior"] = {"kappa": DEFAULT_KAPPA if cfg.kappa is None else cfg.kappa,
                                 "lam": cfg.sigma**2 if cfg.lam is None else cfg.lam,
                                 "sigma": cfg.sigma}
    summary.update(mnist_summary(rows))
    write_json(out_dir / "summary.json", summary)
    return summary
