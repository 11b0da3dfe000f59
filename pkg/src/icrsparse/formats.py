"""Matrix and vector file formats used by the ``solve`` subcommand.

CSV: plain comma-separated numbers, row-major, no header. A vector may be one
column or one row.

ICRMAT01: 8-byte magic ``b"ICRMAT01"``, little-endian u64 rows, u64 cols,
then rows*cols little-endian float64 values in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"ICRMAT01"
_HEADER = struct.Struct("<8sQQ")


class MatrixFormatError(ValueError):
    def __init__(self, message, path=None, row=None, col=None):
        super().__init__(message)
        self.path = None if path is None else str(path)
        self.row = row
        self.col = col

    def details(self):
        return {"path": self.path, "row": self.row, "col": self.col}


def encode_binary(a) -> bytes:
    a = np.asarray(a, dtype="<f8")
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ValueError("only 1-D or 2-D arrays can be stored")
    return _HEADER.pack(MAGIC, a.shape[0], a.shape[1]) + np.ascontiguousarray(a).tobytes()


def decode_binary(data: bytes, path=None) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise MatrixFormatError("file shorter than the ICRMAT01 header", path)
    magic, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MatrixFormatError(f"bad magic {magic!r}", path)
    expected = rows * cols * 8
    payload = data[_HEADER.size:]
    if len(payload) != expected:
        raise MatrixFormatError(
            f"payload has {len(payload)} bytes, header announces {expected}", path
        )
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(float)


def parse_csv(text: str, path=None) -> np.ndarray:
    rows = []
    width = None
    for r, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cells = line.split(",")
        vals = []
        for c, cell in enumerate(cells, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise MatrixFormatError(
                    f"row {r}, column {c}: cannot parse {cell.strip()!r} as a number",
                    path, r, c,
                ) from None
            if not np.isfinite(v):
                raise MatrixFormatError(f"row {r}, column {c}: non-finite value", path, r, c)
            vals.append(v)
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise MatrixFormatError(
                f"row {r} has {len(vals)} columns, expected {width}", path, r, len(vals)
            )
        rows.append(vals)
    if not rows:
        raise MatrixFormatError("no data rows", path)
    return np.array(rows, dtype=float)


def format_csv(a) -> str:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in a)


def read_matrix(path) -> np.ndarray:
    """Read a 2-D array from CSV or ICRMAT01 (detected by magic)."""
    path = Path(path)
    data = path.read_bytes()
    if data[:8] == MAGIC:
        return decode_binary(data, path)
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError:
        raise MatrixFormatError("neither ICRMAT01 nor ASCII CSV", path) from None
    return parse_csv(text, path)


def read_vector(path) -> np.ndarray:
    a = read_matrix(path)
    if min(a.shape) != 1:
        raise MatrixFormatError(f"expected a vector, got shape {a.shape}", path)
    return a.reshape(-1)


def write_matrix(path, a, binary: bool = False) -> None:
    path = Path(path)
    if binary:
        path.write_bytes(encode_binary(a))
    else:
        path.write_text(format_csv(a))
