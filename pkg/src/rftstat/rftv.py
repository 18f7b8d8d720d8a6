"""RFTV volume files and headered design CSVs.

Layout (little-endian): ``b"RFTV"``, u32 version (1), u32 N, u64 dims[N],
f64 step[N], u32 n, u32 d, then ``n * d * prod(dims)`` f64 values ordered
voxel-major (C order over dims), then subject, then component. A mask is an
RFTV file with ``n = d = 1`` holding 0/1.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

MAGIC = b"RFTV"
VERSION = 1

PathLike = Union[str, Path]


@dataclass
class Volume:
    """Array of shape ``dims + (n, d)`` plus per-axis step sizes."""

    values: np.ndarray
    step: tuple[float, ...]

    @property
    def dims(self) -> tuple[int, ...]:
        return self.values.shape[:-2]


def encode(values: np.ndarray, step=None) -> bytes:
    values = np.asarray(values, dtype="<f8")
    if values.ndim < 3:
        raise ValueError("RFTV values need shape dims + (n, d)")
    dims = values.shape[:-2]
    n, d = values.shape[-2:]
    step = tuple(float(h) for h in step) if step is not None else (1.0,) * len(dims)
    if len(step) != len(dims):
        raise ValueError("step needs one entry per axis")
    head = MAGIC + struct.pack("<II", VERSION, len(dims))
    head += struct.pack(f"<{len(dims)}Q", *dims)
    head += struct.pack(f"<{len(dims)}d", *step)
    head += struct.pack("<II", n, d)
    return head + np.ascontiguousarray(values).tobytes()


def decode(blob: bytes) -> Volume:
    if blob[:4] != MAGIC:
        raise ValueError("not an RFTV file (bad magic)")
    version, ndim = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise ValueError(f"unsupported RFTV version {version}")
    off = 12
    dims = struct.unpack_from(f"<{ndim}Q", blob, off)
    off += 8 * ndim
    step = struct.unpack_from(f"<{ndim}d", blob, off)
    off += 8 * ndim
    n, d = struct.unpack_from("<II", blob, off)
    off += 8
    count = n * d * int(np.prod(dims, dtype=np.int64))
    if len(blob) - off != 8 * count:
        raise ValueError(f"RFTV payload has {len(blob) - off} bytes, expected {8 * count}")
    values = np.frombuffer(blob, dtype="<f8", count=count, offset=off).astype(float)
    return Volume(values.reshape(tuple(dims) + (n, d)), tuple(step))


def write(path: PathLike, values: np.ndarray, step=None) -> None:
    Path(path).write_bytes(encode(values, step))


def read(path: PathLike) -> Volume:
    return decode(Path(path).read_bytes())


def read_mask(path: PathLike) -> np.ndarray:
    vol = read(path)
    if vol.values.shape[-2:] != (1, 1):
        raise ValueError("a mask file must have n = d = 1")
    vals = vol.values[..., 0, 0]
    if not np.all((vals == 0) | (vals == 1)):
        raise ValueError("mask values must be 0 or 1")
    return vals.astype(bool)


def write_scalar(path: PathLike, field: np.ndarray, step=None) -> None:
    """Write a scalar map (or mask) as an ``n = d = 1`` volume."""
    write(path, np.asarray(field, dtype=float)[..., None, None], step)


def read_design_csv(path: PathLike) -> tuple[list[str], np.ndarray]:
    text = Path(path).read_text()
    return parse_design_csv(text)


def parse_design_csv(text: str) -> tuple[list[str], np.ndarray]:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if len(rows) < 2:
        raise ValueError("design CSV needs a header and at least one row")
    names = [h.strip() for h in rows[0]]
    data = np.array([[float(x) for x in r] for r in rows[1:]])
    if data.shape[1] != len(names):
        raise ValueError("design rows must match the header width")
    return names, data


def design_csv(names, matrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in np.asarray(matrix, dtype=float):
        w.writerow([repr(float(x)) for x in row])
    return buf.getvalue()
