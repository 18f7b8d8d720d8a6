"""Voxelwise multivariate linear model analysis with familywise thresholds.

Each voxel carries an ``n x d`` response ``Y(s)`` fitted on a common
``n x p`` design. The design columns split into nuisance and test columns;
both the responses and the test columns are residualized on the nuisance
columns before the hypothesis and error sums of squares are formed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .ecdensity import StatDescriptor, StatKind
from .geometry import SearchRegion
from .inference import threshold as solve_threshold
from .lattice_ec import ScalarLattice
from .lkc_est import ResidualField, lkc_top, normalize_residuals, region_from_top_lkc
from .simulate import generalized_roots

log = logging.getLogger(__name__)

MAP_KINDS = ("hotelling", "roy", "maxcorr")


@dataclass
class Dataset:
    """Responses ``values`` of shape ``dims + (n, d)`` with an in-region mask."""

    values: np.ndarray
    step: Optional[tuple[float, ...]] = None
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim < 3:
            raise ValueError("dataset values need shape dims + (n, d)")
        ndim = self.values.ndim - 2
        self.step = tuple(float(h) for h in self.step) if self.step is not None else (1.0,) * ndim
        if self.mask is None:
            self.mask = np.ones(self.dims, dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.dims:
            raise ValueError("mask shape must match dataset dims")
        if not self.mask.any():
            raise ValueError("mask is empty")
        if not np.all(np.isfinite(self.values[self.mask])):
            raise ValueError("dataset has non-finite values inside the mask")

    @property
    def dims(self) -> tuple[int, ...]:
        return self.values.shape[:-2]

    @property
    def n(self) -> int:
        return self.values.shape[-2]

    @property
    def d(self) -> int:
        return self.values.shape[-1]


@dataclass
class Design:
    """Design matrix with a test / nuisance split of its columns."""

    X: np.ndarray
    test: tuple[int, ...]
    names: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2:
            raise ValueError("design must be a 2-D matrix")
        self.test = tuple(sorted(int(i) for i in self.test))
        p = self.X.shape[1]
        if not self.test:
            raise ValueError("need at least one test column")
        if len(set(self.test)) != len(self.test) or any(not 0 <= i < p for i in self.test):
            raise ValueError(f"test columns must be distinct indices in [0, {p})")
        if self.names is None:
            self.names = tuple(f"x{i}" for i in range(p))
        self.names = tuple(self.names)
        if len(self.names) != p:
            raise ValueError("need one name per design column")
        if np.linalg.matrix_rank(self.X) < p:
            raise ValueError("design matrix is rank deficient")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def eta(self) -> int:
        return len(self.test)

    @property
    def nuisance(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.p) if i not in self.test)

    @classmethod
    def from_names(cls, names: Sequence[str], X, test_names: Sequence[str]) -> "Design":
        names = list(names)
        missing = [t for t in test_names if t not in names]
        if missing:
            raise ValueError(f"unknown test columns: {missing}")
        return cls(X, tuple(names.index(t) for t in test_names), tuple(names))


@dataclass
class Fit:
    beta: np.ndarray
    residuals: ResidualField
    nu: int


def _check_shapes(ds: Dataset, design: Design):
    if design.n != ds.n:
        raise ValueError(f"design has {design.n} rows but the dataset has {ds.n} subjects")
    if ds.n <= design.p:
        raise ValueError(f"need n > p, got n={ds.n}, p={design.p}")


def fit_model(ds: Dataset, design: Design) -> Fit:
    """Least squares at every voxel: ``beta = (X'X)^{-1} X'Y``, ``R = Y - X beta``."""
    _check_shapes(ds, design)
    q, r = np.linalg.qr(design.X)
    qty = np.einsum("np,...nd->...pd", q, ds.values)
    beta = np.linalg.solve(r, qty)
    resid = ds.values - np.einsum("np,...pd->...nd", q, qty)
    return Fit(beta, ResidualField(resid, ds.step, design.p, ds.mask), ds.n - design.p)


def _orth(a: np.ndarray) -> np.ndarray:
    return np.linalg.qr(a)[0] if a.shape[1] else a


def hypothesis_matrices(ds: Dataset, design: Design) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-voxel ``(B, V, W)`` after residualizing on nuisance columns.

    ``B`` is the ``eta x d`` projection of the residualized responses on an
    orthonormal basis of the residualized test columns; ``V = B'B`` and
    ``W = Y_r'Y_r - V``.
    """
    _check_shapes(ds, design)
    qn = _orth(design.X[:, design.nuisance])
    y = ds.values
    if qn.shape[1]:
        y = y - np.einsum("np,...pd->...nd", qn, np.einsum("np,...nd->...pd", qn, y))
    xt = design.X[:, design.test]
    if qn.shape[1]:
        xt = xt - qn @ (qn.T @ xt)
    qt = _orth(xt)
    b = np.einsum("ne,...nd->...ed", qt, y)
    v = np.einsum("...ei,...ej->...ij", b, b)
    w = np.einsum("...ni,...nj->...ij", y, y) - v
    return b, v, w


def _valid_voxels(w: np.ndarray, mask: np.ndarray) -> np.ndarray:
    evals = np.linalg.eigvalsh(w)
    scale = np.maximum(np.abs(evals[..., -1]), np.finfo(float).tiny)
    ok = mask & (evals[..., 0] > 1e-12 * scale)
    bad = int(np.count_nonzero(mask & ~ok))
    if bad:
        log.warning("%d voxels have a singular error matrix and are excluded", bad)
    return ok


def statistic_map(ds: Dataset, design: Design, kind: str) -> ScalarLattice:
    """Hotelling, Roy maximum root or maximum canonical correlation at each voxel.

    Voxels outside the mask or with a singular error matrix are NaN.
    """
    kind = kind.lower()
    if kind not in MAP_KINDS:
        raise ValueError(f"statistic map kind must be one of {MAP_KINDS}, got {kind}")
    if kind == "hotelling" and design.eta != 1:
        raise ValueError("Hotelling maps need exactly one test column")
    nu = ds.n - design.p
    eta = design.eta
    b, v, w = hypothesis_matrices(ds, design)
    ok = _valid_voxels(w, ds.mask)
    out = np.full(ds.dims, np.nan)
    if kind == "hotelling":
        z = b[ok][:, 0, :]
        out[ok] = nu * np.einsum("ki,ki->k", z, np.linalg.solve(w[ok], z[..., None])[..., 0])
    else:
        lam = generalized_roots(v[ok], w[ok], eta, nu)[:, 0]
        if kind == "roy":
            out[ok] = lam
        else:
            x = np.clip(lam, 0.0, None) * eta / nu
            out[ok] = np.sqrt(x / (1.0 + x))
    return ScalarLattice(out, ds.step)


def stat_descriptor(kind: str, d: int, design: Design, n_subjects: int) -> StatDescriptor:
    """Null distribution of a map built by :func:`statistic_map`."""
    nu = n_subjects - design.p
    kind = kind.lower()
    if kind == "hotelling":
        return StatDescriptor(kind=StatKind.HOTELLING, d=d, nu=nu)
    if kind == "roy":
        return StatDescriptor(kind=StatKind.ROY, d=d, eta=design.eta, nu=nu)
    if kind == "maxcorr":
        return StatDescriptor(kind=StatKind.MAXCORR, d=d, eta=design.eta, n=nu + design.eta)
    raise ValueError(f"unknown map kind {kind}")


def connectivity_regressors(ds: Dataset, design: Design, reference: Sequence[int],
                            interaction: bool = False,
                            signs: Optional[Sequence[float]] = None) -> Design:
    """Add the responses at a reference voxel as test regressors.

    The original columns become nuisance. With ``interaction`` the reference
    columns stay as nuisance and copies multiplied by ``signs`` (``+1`` in one
    group, ``-1`` in the other) are tested instead.
    """
    ref = tuple(int(i) for i in reference)
    if len(ref) != len(ds.dims) or any(not 0 <= i < m for i, m in zip(ref, ds.dims)):
        raise ValueError(f"reference voxel {ref} is outside the lattice")
    if not ds.mask[ref]:
        raise ValueError(f"reference voxel {ref} is outside the mask")
    yref = ds.values[ref]
    names = list(design.names) + [f"ref{j}" for j in range(ds.d)]
    cols = [design.X, yref]
    if interaction:
        if signs is None:
            raise ValueError("interaction needs per-subject group signs")
        signs = np.asarray(signs, dtype=float)
        if signs.shape != (ds.n,) or not np.all(np.abs(signs) == 1):
            raise ValueError("signs must be +1 or -1 for every subject")
        cols.append(signs[:, None] * yref)
        names += [f"ref{j}_x_group" for j in range(ds.d)]
    X = np.hstack(cols)
    p = X.shape[1]
    return Design(X, tuple(range(p - ds.d, p)), tuple(names))


@dataclass
class Cluster:
    voxels: list[tuple[int, ...]]
    peak_value: float
    peak_location: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "size": len(self.voxels),
            "peak_value": self.peak_value,
            "peak_location": list(self.peak_location),
            "voxels": [list(v) for v in self.voxels],
        }


@dataclass
class AnalysisReport:
    statistic: ScalarLattice
    stat: StatDescriptor
    threshold: float
    alpha: float
    region: SearchRegion
    clusters: list[Cluster] = field(default_factory=list)
    lkc_top_estimate: Optional[float] = None
    invalid_voxels: int = 0

    def to_dict(self) -> dict:
        return {
            "stat": self.stat.to_dict(),
            "threshold": self.threshold,
            "alpha": self.alpha,
            "region": self.region.to_dict(),
            "L_N": self.lkc_top_estimate,
            "invalid_voxels": self.invalid_voxels,
            "max_statistic": float(np.nanmax(self.statistic.values)),
            "clusters": [c.to_dict() for c in self.clusters],
        }


def find_clusters(values: np.ndarray, t: float) -> list[Cluster]:
    """Connected suprathreshold sets; lattice neighbours along an axis are adjacent."""
    supra = np.nan_to_num(values, nan=-np.inf) >= t
    labels, count = ndimage.label(supra)
    clusters = []
    for lab in range(1, count + 1):
        idx = np.argwhere(labels == lab)
        vals = values[tuple(idx.T)]
        peak = int(np.argmax(vals))
        clusters.append(Cluster([tuple(int(i) for i in v) for v in idx], float(vals[peak]),
                                tuple(int(i) for i in idx[peak])))
    clusters.sort(key=lambda c: -c.peak_value)
    return clusters


def estimate_region(ds: Dataset, design: Design) -> tuple[SearchRegion, float]:
    """Ball short-cut region from the top LKC of the normalized residuals."""
    fit = fit_model(ds, design)
    top = lkc_top(normalize_residuals(fit.residuals))
    return region_from_top_lkc(len(ds.dims), top), top


def analyze(ds: Dataset, design: Design, kind: str, alpha: float = 0.05,
            region: Optional[SearchRegion] = None) -> AnalysisReport:
    """Statistic map, search-region LKCs, familywise threshold and clusters."""
    stat_map = statistic_map(ds, design, kind)
    top = None
    if region is None:
        region, top = estimate_region(ds, design)
    stat = stat_descriptor(kind, ds.d, design, ds.n)
    t = solve_threshold(stat, region, alpha)
    invalid = int(np.count_nonzero(ds.mask & np.isnan(stat_map.values)))
    return AnalysisReport(stat_map, stat, t, alpha, region, find_clusters(stat_map.values, t), top, invalid)

