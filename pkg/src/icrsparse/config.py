"""Experiment configuration shared by the CLI subcommands.

The file form is JSON. ``None`` for ``kappa``/``lam``/baseline weights means
"derive per instance": ``kappa = k/p`` (synthetic) or the image default,
``lam = sigma**2``, elastic-net ``l2 = lam`` and ``l1 = mean(rho)``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

from icrsparse.icr import IcrConfig
from icrsparse.oracle import OracleConfig
from icrsparse.prox import SolverSettings

SCHEMA_VERSION = 1

METHODS = ("icr", "icr-nn", "enet", "lasso", "oracle")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    command: str = "synth-bench"
    # synthetic instances
    p: int = 64
    q: int = 32
    k: int = 10
    sigma: float = 0.01
    amplitude_dist: str = "standard_normal"
    unit_columns: bool = True
    # prior
    kappa: Optional[float] = None
    lam: Optional[float] = None
    on_nonsparsifying: str = "error"
    # ICR
    icr_tol: float = 1e-6
    max_outer_iters: int = 500
    pruning: str = "off"
    alpha: Optional[float] = None
    mu_floor: float = 1e-12
    # inner solver
    max_inner_iters: int = 2000
    kkt_tolerance: float = 1e-8
    # baselines
    enet_l1: Optional[float] = None
    enet_l2: Optional[float] = None
    lasso_l1: Optional[float] = None
    # methods; the oracle also runs when oracle="auto" and p <= oracle_max_p
    methods: List[str] = field(default_factory=lambda: ["icr", "enet", "lasso"])
    oracle: str = "auto"
    oracle_max_p: int = 20
    # run control
    n_realizations: int = 100
    seed: int = 0
    threads: int = 1
    out_dir: Optional[str] = None
    # sweep
    sweep_param: str = "k"
    sweep_values: List[float] = field(default_factory=list)
    # mnist
    images: Optional[str] = None
    start: int = 0
    count: int = 20
    q_measurements: int = 150
    pgm_method: str = "icr-nn"
    # solve
    matrix: Optional[str] = None
    observation: Optional[str] = None
    method: str = "icr"
    output: Optional[str] = None

    def validate(self) -> "ExperimentConfig":
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")
        if self.oracle not in ("auto", "on", "off"):
            raise ConfigError("oracle must be auto, on or off")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.n_realizations < 1:
            raise ConfigError("n_realizations must be >= 1")
        if self.sweep_param not in ("k", "sigma"):
            raise ConfigError("sweep_param must be k or sigma")
        if self.on_nonsparsifying not in ("error", "warn", "ignore"):
            raise ConfigError("on_nonsparsifying must be error, warn or ignore")
        if self.kappa is not None and not 0 < self.kappa < 1:
            raise ConfigError("kappa must lie in (0, 1)")
        if self.lam is not None and not self.lam > 0:
            raise ConfigError("lam must be positive")
        try:
            self.icr_config()
            OracleConfig(max_p=self.oracle_max_p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def solver_settings(self) -> SolverSettings:
        return SolverSettings(max_inner_iters=self.max_inner_iters,
                              kkt_tolerance=self.kkt_tolerance)

    def icr_config(self, variant: str = "unconstrained") -> IcrConfig:
        return IcrConfig(
            variant=variant,
            tol=self.icr_tol,
            max_outer_iters=self.max_outer_iters,
            pruning=self.pruning,
            alpha=self.alpha,
            mu_floor=self.mu_floor,
            on_nonsparsifying=self.on_nonsparsifying,
            settings=self.solver_settings(),
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(d)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)
