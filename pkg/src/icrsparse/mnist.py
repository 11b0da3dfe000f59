"""Sparse-image recovery on MNIST-style IDX3 image files."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from icrsparse.baselines import ElasticNetParams, elastic_net
from icrsparse.icr import IcrConfig, icr_solve
from icrsparse.metrics import mse
from icrsparse.model import MeasurementModel, SpikeSlabPrior
from icrsparse.synth import gaussian_design, rng_for

IDX3_MAGIC = 0x00000803
DEFAULT_KAPPA = 0.19


class IdxError(ValueError):
    pass


class BadMagic(IdxError):
    pass


class TruncatedPayload(IdxError):
    pass


class TrailingBytes(IdxError):
    pass


@dataclass(frozen=True, eq=False)
class IdxImageSet:
    pixels: np.ndarray  # uint8, count x rows x cols

    @property
    def count(self) -> int:
        return self.pixels.shape[0]

    @property
    def rows(self) -> int:
        return self.pixels.shape[1]

    @property
    def cols(self) -> int:
        return self.pixels.shape[2]


def parse_idx_images(data: bytes) -> IdxImageSet:
    """Parse big-endian IDX3-ubyte bytes; the payload length must match exactly."""
    if len(data) < 4:
        raise TruncatedPayload("missing IDX magic")
    (magic,) = struct.unpack(">I", data[:4])
    if magic != IDX3_MAGIC:
        raise BadMagic(f"magic 0x{magic:08x}, expected 0x{IDX3_MAGIC:08x}")
    if len(data) < 16:
        raise TruncatedPayload("header shorter than 16 bytes")
    count, rows, cols = struct.unpack(">III", data[4:16])
    if rows < 1 or cols < 1:
        raise IdxError(f"invalid image size {rows}x{cols}")
    need = count * rows * cols
    have = len(data) - 16
    if have < need:
        raise TruncatedPayload(f"payload has {have} bytes, header announces {need}")
    if have > need:
        raise TrailingBytes(f"{have - need} bytes after the announced payload")
    px = np.frombuffer(data, dtype=np.uint8, offset=16).reshape(count, rows, cols).copy()
    return IdxImageSet(px)


def serialize_idx_images(images: IdxImageSet) -> bytes:
    px = np.asarray(images.pixels, dtype=np.uint8)
    count, rows, cols = px.shape
    return struct.pack(">IIII", IDX3_MAGIC, count, rows, cols) + px.tobytes()


def read_idx_images(path) -> IdxImageSet:
    """Read an IDX3 file; gzip-compressed input is detected and inflated."""
    data = Path(path).read_bytes()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return parse_idx_images(data)


def write_pgm(path, image) -> None:
    """Write a [0, 1]-scaled image as a binary (P5) portable graymap."""
    img = np.clip(np.asarray(image, dtype=float), 0.0, 1.0)
    px = np.rint(img * 255.0).astype(np.uint8)
    rows, cols = px.shape
    Path(path).write_bytes(f"P5\n{cols} {rows}\n255\n".encode("ascii") + px.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a P5 graymap")
    cols, rows, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    px = np.frombuffer(parts[4][: rows * cols], dtype=np.uint8).reshape(rows, cols)
    return px.astype(float) / maxval


def image_prior(p: int, sigma: float, kappa: float = DEFAULT_KAPPA,
                lam: Optional[float] = None) -> SpikeSlabPrior:
    return SpikeSlabPrior.uniform(p, kappa, sigma**2 if lam is None else lam, sigma)


def measure_image(image, q_measurements: int, sigma: float, seed: int):
    """Vectorised [0, 1] image and its seeded noisy Gaussian measurements."""
    raw = np.asarray(image)
    img = raw.astype(float)
    if raw.dtype == np.uint8 or img.max(initial=0.0) > 1.0:
        img = img / 255.0
    x = img.reshape(-1)
    p = x.size
    if not 1 <= q_measurements <= p:
        raise ValueError(f"q_measurements must be in [1, {p}]")
    rng = rng_for(seed)
    A = gaussian_design(rng, q_measurements, p, unit_columns=True)
    y = A @ x + sigma * rng.standard_normal(q_measurements)
    return MeasurementModel(A, y, sigma, unit_columns=True), x


def solve_image(image, q_measurements: int = 150, prior: Optional[SpikeSlabPrior] = None,
                config: IcrConfig = IcrConfig(variant="nonnegative"), seed: int = 0,
                sigma: float = 0.01, method: str = "icr"):
    """Measure and recover one image; returns ``(solution, trace_or_None, x_true)``.

    ``method`` is ``"icr"`` (variant from ``config``) or ``"enet"``.
    """
    model, x = measure_image(image, q_measurements, sigma, seed)
    if prior is None:
        prior = image_prior(model.p, sigma)
    trace = None
    if method == "icr":
        sol, trace = icr_solve(model, prior, config)
    elif method == "enet":
        params = ElasticNetParams.from_prior(prior, config.on_nonsparsifying)
        sol = elastic_net(model, params, config.settings, prior)
    else:
        raise ValueError(f"unknown method {method!r}")
    return sol, trace, x


def recover_image(image, q_measurements: int = 150, prior: Optional[SpikeSlabPrior] = None,
                  config: IcrConfig = IcrConfig(variant="nonnegative"), seed: int = 0,
                  sigma: float = 0.01, method: str = "icr"):
    """Recover one image from random measurements.

    Returns ``(reconstruction, mse)`` with the reconstruction in [0, 1] scale
    and the image's shape.
    """
    shape = np.asarray(image).shape
    sol, _, x = solve_image(image, q_measurements, prior, config, seed, sigma, method)
    return sol.x.reshape(shape), mse(sol.x, x)
