"""Euler characteristic of excursion sets sampled on rectilinear lattices.

The set is treated as a closed cubical complex: a k-cell (edge, face, cube)
belongs to it iff all of its 2^k corner points do, and

    EC = #points - #edges + #faces - #cubes.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


@dataclass
class ScalarLattice:
    """Field values on a rectilinear grid."""

    values: np.ndarray
    step: Optional[tuple[float, ...]] = None
    periodic: Optional[tuple[bool, ...]] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        ndim = self.values.ndim
        self.step = tuple(float(s) for s in self.step) if self.step is not None else (1.0,) * ndim
        self.periodic = tuple(bool(p) for p in self.periodic) if self.periodic is not None else (False,) * ndim
        if len(self.step) != ndim or len(self.periodic) != ndim:
            raise ValueError("step and periodic must have one entry per axis")


@dataclass
class BinaryLattice:
    mask: np.ndarray
    periodic: Optional[tuple[bool, ...]] = None

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        ndim = self.mask.ndim
        self.periodic = tuple(bool(p) for p in self.periodic) if self.periodic is not None else (False,) * ndim
        if len(self.periodic) != ndim:
            raise ValueError("periodic must have one entry per axis")
        for axis, per in enumerate(self.periodic):
            if per and self.mask.shape[axis] < 3:
                raise ValueError("periodic axes need at least 3 points")

    @property
    def dims(self) -> tuple[int, ...]:
        return self.mask.shape


@dataclass
class ECCurve:
    thresholds: np.ndarray
    observed_ec: np.ndarray
    expected_ec: Optional[np.ndarray] = None
    observed_se: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.thresholds = np.asarray(self.thresholds, dtype=float)
        self.observed_ec = np.asarray(self.observed_ec)
        if self.expected_ec is not None:
            self.expected_ec = np.asarray(self.expected_ec, dtype=float)
        if self.observed_se is not None:
            self.observed_se = np.asarray(self.observed_se, dtype=float)
        for arr in (self.observed_ec, self.expected_ec, self.observed_se):
            if arr is not None and arr.shape != self.thresholds.shape:
                raise ValueError("ECCurve columns must have equal lengths")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = ["t", "observed_ec", "expected_ec"]
        if self.observed_se is not None:
            header.append("observed_se")
        writer.writerow(header)
        for k, t in enumerate(self.thresholds):
            row = [repr(float(t)), _fmt(self.observed_ec[k]),
                   "" if self.expected_ec is None else repr(float(self.expected_ec[k]))]
            if self.observed_se is not None:
                row.append(repr(float(self.observed_se[k])))
            writer.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ECCurve":
        rows = list(csv.DictReader(io.StringIO(text)))
        t = [float(r["t"]) for r in rows]
        obs = [float(r["observed_ec"]) for r in rows]
        exp = [float(r["expected_ec"]) for r in rows] if rows and rows[0]["expected_ec"] != "" else None
        se = [float(r["observed_se"]) for r in rows] if rows and "observed_se" in rows[0] else None
        obs_arr = np.asarray(obs)
        if np.all(obs_arr == np.round(obs_arr)):
            obs_arr = obs_arr.astype(int)
        return cls(t, obs_arr, exp, se)


def _fmt(v) -> str:
    if float(v) == int(v) and np.issubdtype(np.asarray(v).dtype, np.integer):
        return str(int(v))
    return repr(float(v))


def _corner_and(mask: np.ndarray, axes: Sequence[int], periodic: Sequence[bool]) -> np.ndarray:
    """Boolean array marking cells spanned by ``axes`` whose corners are all set."""
    out = mask
    for axis in axes:
        if periodic[axis]:
            out = out & np.roll(out, -1, axis=axis)
        else:
            lead = [slice(None)] * out.ndim
            trail = [slice(None)] * out.ndim
            lead[axis] = slice(0, -1)
            trail[axis] = slice(1, None)
            out = out[tuple(lead)] & out[tuple(trail)]
    return out


def cell_counts(b: BinaryLattice) -> tuple[int, ...]:
    """Number of k-cells of the cubical complex for k = 0..N."""
    ndim = b.mask.ndim
    counts = []
    for k in range(ndim + 1):
        total = 0
        for axes in itertools.combinations(range(ndim), k):
            total += int(np.count_nonzero(_corner_and(b.mask, axes, b.periodic)))
        counts.append(total)
    return tuple(counts)


def euler_characteristic(b: BinaryLattice) -> int:
    """Alternating cell count of the closed cubical complex defined by the mask."""
    if b.mask.ndim not in (1, 2, 3):
        raise ValueError(f"lattice EC supports 1, 2 or 3 dimensions, got {b.mask.ndim}")
    counts = cell_counts(b)
    return int(sum((-1) ** k * c for k, c in enumerate(counts)))


def excursion_mask(field: ScalarLattice, t: float) -> BinaryLattice:
    """Closed excursion set ``{s : T(s) >= t}``."""
    return BinaryLattice(field.values >= t, field.periodic)


def _corner_min(values: np.ndarray, axes: Sequence[int], periodic: Sequence[bool]) -> np.ndarray:
    out = values
    for axis in axes:
        if periodic[axis]:
            out = np.minimum(out, np.roll(out, -1, axis=axis))
        else:
            lead = [slice(None)] * out.ndim
            trail = [slice(None)] * out.ndim
            lead[axis] = slice(0, -1)
            trail[axis] = slice(1, None)
            out = np.minimum(out[tuple(lead)], out[tuple(trail)])
    return out


def ec_curve(field: ScalarLattice, thresholds: Sequence[float]) -> ECCurve:
    """Observed EC of the excursion set at each threshold.

    A cell lies in ``{T >= t}`` iff the minimum of its corner values does,
    so each cell's minimum is computed once and counted against all
    thresholds by binary search.
    """
    thresholds = np.asarray(thresholds, dtype=float)
    if np.any(np.diff(thresholds) < 0):
        raise ValueError("thresholds must be sorted")
    values = field.values
    if values.ndim not in (1, 2, 3):
        raise ValueError(f"lattice EC supports 1, 2 or 3 dimensions, got {values.ndim}")
    ec = np.zeros(thresholds.shape, dtype=np.int64)
    for k in range(values.ndim + 1):
        for axes in itertools.combinations(range(values.ndim), k):
            cells = np.sort(_corner_min(values, axes, field.periodic), axis=None)
            above = cells.size - np.searchsorted(cells, thresholds, side="left")
            ec += (-1) ** k * above
    return ECCurve(thresholds, ec)
