"""Seeded synthetic sparse-recovery instances.

Randomness comes from numpy's Philox counter-based bit generator keyed by a
64-bit seed, so output depends only on the seed. Draw order per instance:
design matrix (q x p, row-major standard normals), support (``choice``
without replacement), amplitudes, noise.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from icrsparse.model import MeasurementModel

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

AMPLITUDE_DISTS = ("standard_normal", "uniform_pm1")


def _splitmix64(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


def derive_realization_seed(master_seed: int, index: int) -> int:
    """Seed of realization ``index`` under ``master_seed``.

    ``splitmix64(master + (index + 1) * golden mod 2^64)``; the golden
    constant is odd and the finaliser is a bijection on 64-bit words, so the
    map is injective in ``index`` for any fixed master seed.
    """
    if index < 0:
        raise ValueError("index must be non-negative")
    z = (int(master_seed) + (int(index) + 1) * _GOLDEN) & _MASK64
    return _splitmix64(z)


def derive_realization_seeds(master_seed: int, indices) -> np.ndarray:
    """Vectorised :func:`derive_realization_seed` returning ``uint64``."""
    idx = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(int(master_seed) & _MASK64) + (idx + np.uint64(1)) * np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) & _MASK64))


@dataclass(frozen=True)
class SynthSpec:
    p: int
    q: int
    k: int
    sigma: float = 0.01
    seed: int = 0
    amplitude_dist: str = "standard_normal"
    unit_columns: bool = True

    def __post_init__(self):
        for name in ("p", "q", "k"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.k > self.p:
            raise ValueError(f"k={self.k} exceeds p={self.p}")
        if not self.sigma >= 0:
            raise ValueError("sigma must be >= 0")
        if not 0 <= int(self.seed) <= _MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.amplitude_dist not in AMPLITUDE_DISTS:
            raise ValueError(f"amplitude_dist must be one of {AMPLITUDE_DISTS}")

    def to_dict(self):
        return asdict(self)


def gaussian_design(rng: np.random.Generator, q: int, p: int, unit_columns: bool = True):
    A = rng.standard_normal((q, p))
    if unit_columns:
        A /= np.linalg.norm(A, axis=0)
    return A


def generate(spec: SynthSpec):
    """Return ``(MeasurementModel, x0)`` for the instance keyed by ``spec.seed``."""
    rng = rng_for(spec.seed)
    A = gaussian_design(rng, spec.q, spec.p, spec.unit_columns)
    support = np.sort(rng.choice(spec.p, size=spec.k, replace=False))
    if spec.amplitude_dist == "standard_normal":
        amps = rng.standard_normal(spec.k)
    else:
        amps = rng.uniform(-1.0, 1.0, spec.k)
    x0 = np.zeros(spec.p)
    x0[support] = amps
    noise = spec.sigma * rng.standard_normal(spec.q)
    y = A @ x0 + noise
    return MeasurementModel(A, y, spec.sigma, unit_columns=spec.unit_columns), x0
