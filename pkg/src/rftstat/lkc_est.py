"""Lipschitz-Killing curvature estimation from residual fields.

The top LKC is estimated by summing ``det(D'D)^{1/2}`` over lattice points,
where ``D`` holds forward differences of the unit-normalized residual
vectors; lower LKCs come from a ball (or box) with matching size.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import SearchRegion, ball_region, box_region

log = logging.getLogger(__name__)


@dataclass
class ResidualField:
    """Per-voxel ``n x d`` residual matrices on an ``N``-dimensional lattice.

    ``values`` has shape ``dims + (n, d)``. ``rank`` is the rank of the
    design the residuals came from, so ``n - rank`` is the residual df.
    """

    values: np.ndarray
    step: Optional[tuple[float, ...]] = None
    rank: int = 0
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim < 3:
            raise ValueError("residual values need shape dims + (n, d)")
        ndim = self.values.ndim - 2
        self.step = tuple(float(s) for s in self.step) if self.step is not None else (1.0,) * ndim
        if len(self.step) != ndim:
            raise ValueError("step needs one entry per lattice axis")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.dims:
                raise ValueError("mask shape must match lattice dims")

    @property
    def dims(self) -> tuple[int, ...]:
        return self.values.shape[:-2]

    @property
    def n(self) -> int:
        return self.values.shape[-2]

    @property
    def d(self) -> int:
        return self.values.shape[-1]


def normalize_residuals(r: ResidualField) -> ResidualField:
    """Scale every residual column to unit Euclidean norm over subjects."""
    norms = np.sqrt(np.einsum("...nd,...nd->...d", r.values, r.values))
    bad = norms == 0
    if r.mask is not None:
        bad &= r.mask[..., None]
    if np.any(bad):
        voxel, comp = np.argwhere(bad)[0][:-1], np.argwhere(bad)[0][-1]
        raise ValueError(f"zero residual norm at voxel {tuple(int(v) for v in voxel)}, component {int(comp)}")
    with np.errstate(invalid="ignore", divide="ignore"):
        q = r.values / norms[..., None, :]
    if r.mask is not None:
        q = np.where(r.mask[..., None, None], q, 0.0)
    return ResidualField(q, r.step, r.rank, r.mask)


def whiten_components(r: ResidualField) -> ResidualField:
    """Rotate components by the inverse square root of the pooled residual covariance."""
    vals = r.values if r.mask is None else r.values[r.mask]
    flat = vals.reshape(-1, r.d)
    cov = flat.T @ flat / flat.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    if evals.min() <= 0:
        raise ValueError("pooled residual covariance is singular")
    inv_root = evecs @ np.diag(evals ** -0.5) @ evecs.T
    return ResidualField(r.values @ inv_root, r.step, r.rank, r.mask)


def _forward(arr: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    # (value at s, value at s + e_axis) over the lattice points that have both
    n = arr.shape[axis]
    return np.take(arr, range(n - 1), axis=axis), np.take(arr, range(1, n), axis=axis)


def _full_neighbourhood(dims: Sequence[int], mask: Optional[np.ndarray]) -> tuple[tuple[slice, ...], np.ndarray]:
    """Slice of lattice points ``s`` with every ``s + e_k`` present, and validity there."""
    core = tuple(slice(0, m - 1) for m in dims)
    if mask is None:
        return core, np.ones([m - 1 for m in dims], dtype=bool)
    valid = mask[core].copy()
    for k in range(len(dims)):
        shifted = tuple(slice(1, m) if j == k else slice(0, m - 1) for j, m in enumerate(dims))
        valid &= mask[shifted]
    return core, valid


def _sqrt_det(gram: np.ndarray) -> np.ndarray:
    det = np.linalg.det(gram) if gram.shape[-1] > 1 else gram[..., 0, 0]
    return np.sqrt(np.clip(det, 0.0, None))


def lkc_top(q: ResidualField) -> float:
    """Top-dimensional LKC: ``sum_j sum_s det(D_j(s)' D_j(s))^{1/2} / d``.

    ``q`` should hold normalized residuals. Lattice points without a full
    forward neighbourhood (inside the mask) are skipped.
    """
    dims = q.dims
    ndim = len(dims)
    if min(dims) < 2:
        raise ValueError("need at least 2 lattice points per axis")
    if ndim > q.n - q.rank:
        raise ValueError(f"cannot estimate a {ndim}-dimensional LKC from {q.n - q.rank} residual df")
    core, valid = _full_neighbourhood(dims, q.mask)
    base = q.values[core]
    diffs = []
    for k in range(ndim):
        shifted = tuple(slice(1, m) if j == k else slice(0, m - 1) for j, m in enumerate(dims))
        diffs.append(q.values[shifted] - base)
    # D has shape core + (n, N, d)
    D = np.stack(diffs, axis=-2)
    per_component = []
    for j in range(q.d):
        Dj = D[..., j]
        gram = np.einsum("...nk,...nl->...kl", Dj, Dj)
        per_component.append(np.sum(_sqrt_det(gram)[valid]))
    return float(np.sum(per_component) / q.d)


def region_from_top_lkc(n_dim: int, top_lkc: float) -> SearchRegion:
    """Ball short-cut: lower LKCs of a ball with the estimated top LKC."""
    return ball_region(n_dim, top_lkc)


class LKCAccumulator:
    """Streaming version of the top-LKC estimator for i.i.d. scalar fields.

    Each added field is treated as one more subject of a single-component
    residual field (``d = 1``); only cross-products between neighbouring
    lattice points are kept, so arbitrarily many replications can be pooled.
    Fields are assumed mean zero (no design to remove).
    """

    def __init__(self, dims: Sequence[int]):
        self.dims = tuple(int(m) for m in dims)
        ndim = len(self.dims)
        # offsets: 0 for s, k+1 for s + e_k
        self.pairs = [(a, b) for a in range(ndim + 1) for b in range(a, ndim + 1)]
        core = [m - 1 for m in self.dims]
        self.sums = {p: np.zeros(core) for p in self.pairs}
        # per-axis edge sums over every lattice line (a^2, b^2, ab)
        self.edges = [np.zeros((3,) + tuple(m - 1 if j == k else m for j, m in enumerate(self.dims)))
                      for k in range(ndim)]
        self.count = 0

    def _views(self, fields: np.ndarray) -> list[np.ndarray]:
        dims = self.dims
        out = [fields[(slice(None),) + tuple(slice(0, m - 1) for m in dims)]]
        for k in range(len(dims)):
            out.append(fields[(slice(None),) + tuple(
                slice(1, m) if j == k else slice(0, m - 1) for j, m in enumerate(dims))])
        return out

    def add(self, fields: np.ndarray) -> None:
        """Add a stack of fields with shape ``(count,) + dims``."""
        fields = np.asarray(fields, dtype=float)
        if fields.shape[1:] != self.dims:
            raise ValueError(f"fields must have shape (count,) + {self.dims}")
        views = self._views(fields)
        for a, b in self.pairs:
            self.sums[(a, b)] += np.einsum("i...,i...->...", views[a], views[b])
        for k, m in enumerate(self.dims):
            a, b = _forward(fields, k + 1)
            self.edges[k] += np.stack([np.einsum("i...,i...->...", a, a),
                                       np.einsum("i...,i...->...", b, b),
                                       np.einsum("i...,i...->...", a, b)])
        self.count += fields.shape[0]

    def merge(self, other: "LKCAccumulator") -> "LKCAccumulator":
        out = LKCAccumulator(self.dims)
        for p in self.pairs:
            out.sums[p] = self.sums[p] + other.sums[p]
        out.edges = [x + y for x, y in zip(self.edges, other.edges)]
        out.count = self.count + other.count
        return out

    def gram(self) -> np.ndarray:
        """Per-point ``D'D`` of the normalized fields, shape ``core + (N, N)``."""
        ndim = len(self.dims)
        if self.count <= ndim:
            raise ValueError(f"need more than {ndim} fields, have {self.count}")
        s = self.sums
        norm = [np.sqrt(s[(a, a)]) for a in range(ndim + 1)]

        def cross(a, b):
            # sum of products of the normalized fields at offsets a, b
            key = (a, b) if a <= b else (b, a)
            return s[key] / (norm[a] * norm[b])

        g = np.empty(tuple(m - 1 for m in self.dims) + (ndim, ndim))
        for k in range(ndim):
            for l in range(ndim):
                g[..., k, l] = cross(k + 1, l + 1) - cross(0, k + 1) - cross(0, l + 1) + 1.0
        return g

    def lkc_top(self) -> float:
        return float(np.sum(_sqrt_det(self.gram())))

    def axis_lengths(self) -> np.ndarray:
        """Effective length of the lattice along each axis, averaged over parallel lines."""
        if self.count < 2:
            raise ValueError("need at least 2 fields")
        lengths = []
        for k, e in enumerate(self.edges):
            aa, bb, ab = e
            sq = 2.0 - 2.0 * ab / np.sqrt(aa * bb)
            lines = int(np.prod([m for j, m in enumerate(self.dims) if j != k]))
            lengths.append(np.sum(np.sqrt(np.clip(sq, 0.0, None))) / lines)
        return np.asarray(lengths)

    def box_region(self) -> SearchRegion:
        """LKCs of the lattice box from the per-axis effective lengths."""
        return box_region(self.axis_lengths())


def box_lkc(q: ResidualField) -> SearchRegion:
    """LKCs of a full rectangular lattice from per-axis effective lengths.

    Along each axis the 1-D version of the top-LKC estimator measures each
    lattice line; averaging over lines gives the effective side lengths,
    whose elementary symmetric polynomials are the box LKCs.
    """
    if q.mask is not None and not q.mask.all():
        raise ValueError("box LKCs need the full lattice; use the ball short-cut for masks")
    lengths = []
    for k, m in enumerate(q.dims):
        a, b = _forward(q.values, k)
        edge = np.sqrt(np.einsum("...nd,...nd->...d", b - a, b - a))
        lines = int(np.prod([c for j, c in enumerate(q.dims) if j != k]))
        lengths.append(float(np.sum(edge) / (lines * q.d)))
    return box_region(lengths)
