"""Command-line entry point: ``icr {synth-bench,sweep,mnist,solve}``.

Settings resolve as defaults, then ``--config FILE`` (JSON), then explicit
flags. Every ``ExperimentConfig`` field has a flag of the same name with
dashes. Exit status is 0 on success, 2 on usage or input errors and 1 on
runtime failures; failures also emit a JSON error record on stderr and in
``<out-dir>/error.json``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import typing
import warnings
from pathlib import Path

import numpy as np

from icrsparse import bench
from icrsparse.baselines import ElasticNetParams, elastic_net, lasso
from icrsparse.config import ConfigError, ExperimentConfig
from icrsparse.formats import MatrixFormatError, read_matrix, read_vector
from icrsparse.icr import icr_solve
from icrsparse.mnist import IdxError
from icrsparse.model import DimensionError, MeasurementModel, NonSparsifyingPrior, SpikeSlabPrior
from icrsparse.oracle import OracleConfig, ProblemTooLarge, global_map

COMMANDS = ("synth-bench", "sweep", "mnist", "solve")
EXIT_USAGE = 2
EXIT_RUNTIME = 1

# fields not exposed as flags (the subcommand sets `command`)
_HIDDEN = {"schema_version", "command"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_field(parser, f: dataclasses.Field):
    flag = "--" + f.name.replace("_", "-")
    hint = typing.get_type_hints(ExperimentConfig)[f.name]
    base = hint
    if typing.get_origin(hint) is typing.Union:
        base = next(a for a in typing.get_args(hint) if a is not type(None))
    kw = {"dest": f.name, "default": argparse.SUPPRESS}
    if base is bool:
        parser.add_argument(flag, action=argparse.BooleanOptionalAction, **kw)
    elif typing.get_origin(base) in (list, typing.List):
        (item,) = typing.get_args(base)
        parser.add_argument(flag, nargs="*", type=item, **kw)
    else:
        parser.add_argument(flag, type=base, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="icr", description="Sparse recovery with Iterative Convex Refinement.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="JSON config file")
        for f in dataclasses.fields(ExperimentConfig):
            if f.name not in _HIDDEN:
                _add_field(sp, f)
    return parser


def resolve_config(argv) -> ExperimentConfig:
    ns = vars(build_parser().parse_args(argv))
    command = ns.pop("command")
    path = ns.pop("config", None)
    cfg = ExperimentConfig.load(path) if path else ExperimentConfig()
    return cfg.replace(command=command, **ns).validate()


def _error_record(exc, code, **details) -> dict:
    rec = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, MatrixFormatError):
        details.update(exc.details())
    if details:
        rec["details"] = details
    return rec


def _emit_error(rec, out_dir):
    line = json.dumps(rec, sort_keys=True, default=str)
    print(line, file=sys.stderr)
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "error.json").write_text(line + "\n")
        except OSError:
            pass


def cmd_solve(cfg: ExperimentConfig, out_dir: Path) -> dict:
    if not cfg.matrix or not cfg.observation:
        raise UsageError("solve needs --matrix and --observation")
    if cfg.kappa is None:
        raise UsageError("solve needs --kappa (prior activation probability)")
    A = read_matrix(cfg.matrix)
    y = read_vector(cfg.observation)
    model = MeasurementModel(A, y, cfg.sigma, unit_columns=False)
    lam = cfg.sigma**2 if cfg.lam is None else cfg.lam
    prior = SpikeSlabPrior.uniform(model.p, cfg.kappa, lam, cfg.sigma)
    settings = cfg.solver_settings()
    trace = None
    if cfg.method in ("icr", "icr-nn"):
        variant = "nonnegative" if cfg.method == "icr-nn" else "unconstrained"
        sol, trace = icr_solve(model, prior, cfg.icr_config(variant))
    elif cfg.method == "enet":
        params = ElasticNetParams.from_prior(prior, cfg.on_nonsparsifying)
        params = ElasticNetParams(params.l1_weight if cfg.enet_l1 is None else cfg.enet_l1,
                                  params.l2_weight if cfg.enet_l2 is None else cfg.enet_l2)
        sol = elastic_net(model, params, settings, prior)
    elif cfg.method == "lasso":
        l1 = cfg.lasso_l1
        if l1 is None:
            l1 = float(np.mean(prior.rho))
        sol = lasso(model, l1, settings, prior)
    elif cfg.method == "oracle":
        sol = global_map(model, prior, OracleConfig(max_p=cfg.oracle_max_p))
    else:
        raise UsageError(f"unknown method {cfg.method!r}")
    result = {
        "schema_version": cfg.schema_version,
        "version": bench.version_string(),
        "config": cfg.to_dict(),
    }
    result.update({
        "method": cfg.method,
        "x": sol.x.tolist(),
        "gamma": sol.gamma.tolist(),
        "cost": sol.cost,
        "iterations": sol.iterations,
        "converged": bool(sol.converged),
        "info": sol.info,
        "trace": None if trace is None else trace.to_dict(include_iterates=False),
    })
    path = Path(cfg.output) if cfg.output else out_dir / "solution.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    bench.write_json(path, result)
    return result


_HANDLERS = {
    "synth-bench": bench.cmd_synth_bench,
    "sweep": bench.cmd_sweep,
    "mnist": bench.cmd_mnist,
    "solve": cmd_solve,
}

_USAGE_ERRORS = (UsageError, ConfigError, MatrixFormatError, IdxError, FileNotFoundError,
                 IsADirectoryError, DimensionError, NonSparsifyingPrior, ProblemTooLarge)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    out_dir = None
    try:
        cfg = resolve_config(argv)
        out_dir = bench.resolve_out_dir(cfg)
        if cfg.command == "sweep" and not cfg.sweep_values:
            raise UsageError("empty sweep grid: pass --sweep-values")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            _HANDLERS[cfg.command](cfg, out_dir)
        (out_dir / "error.json").unlink(missing_ok=True)
        for w in {str(w.message) for w in caught}:
            print(f"warning: {w}", file=sys.stderr)
        return 0
    except _USAGE_ERRORS as exc:
        _emit_error(_error_record(exc, EXIT_USAGE), out_dir)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - every failure gets a machine-readable record
        _emit_error(_error_record(exc, EXIT_RUNTIME), out_dir)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
