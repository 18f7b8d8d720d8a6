"""Monte Carlo engine: smooth Gaussian fields, derived statistic fields, EC experiments.

Component fields are white noise filtered by a truncated Gaussian kernel and
scaled so every lattice point is exactly N(0, 1). Replication ``r`` of a run
with seed ``s`` draws from ``Philox(SeedSequence([s, r]))``, so results are a
pure function of ``(s, r)`` and do not depend on the number of threads.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .ecdensity import StatDescriptor, StatKind
from .geometry import box_region
from .inference import PValueQuery, expected_ec
from .lattice_ec import ECCurve, ScalarLattice, ec_curve
from .lkc_est import LKCAccumulator

log = logging.getLogger(__name__)

RNG_NAME = "numpy Philox4x64-10, stream = SeedSequence([seed, replication])"
MIN_SIGMA = 2.0
TIE_GAP = 1e-10


@dataclass(frozen=True)
class FieldSpec:
    """Lattice and smoothing for simulated component fields.

    ``sigma`` is the kernel standard deviation in lattice steps; the kernel
    is cut at ``truncation`` steps (default ``4 * sigma``).
    """

    dims: tuple[int, ...]
    step: Optional[tuple[float, ...]] = None
    sigma: float = 5.0
    truncation: Optional[float] = None
    periodic: Optional[tuple[bool, ...]] = None
    seed: int = 0
    allow_rough: bool = False

    def __post_init__(self):
        dims = tuple(int(m) for m in self.dims)
        ndim = len(dims)
        if not 1 <= ndim <= 3:
            raise ValueError(f"fields must have 1 to 3 dimensions, got {ndim}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "step", tuple(float(h) for h in self.step) if self.step else (1.0,) * ndim)
        object.__setattr__(self, "periodic", tuple(bool(p) for p in self.periodic) if self.periodic else (False,) * ndim)
        if len(self.step) != ndim or len(self.periodic) != ndim:
            raise ValueError("step and periodic need one entry per axis")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.sigma < MIN_SIGMA and not self.allow_rough:
            raise ValueError(
                f"sigma = {self.sigma} < {MIN_SIGMA} lattice steps undercounts the lattice EC; "
                "set allow_rough=True to override")
        width = 2 * self.radius + 1
        for m in dims:
            if width > m:
                raise ValueError(f"kernel width {width} exceeds lattice size {m}")

    @property
    def radius(self) -> int:
        trunc = 4.0 * self.sigma if self.truncation is None else self.truncation
        return int(math.ceil(trunc))


def kernel_1d(spec: FieldSpec) -> np.ndarray:
    """Truncated Gaussian kernel with unit sum of squares."""
    k = np.arange(-spec.radius, spec.radius + 1, dtype=float)
    f = np.exp(-0.5 * (k / spec.sigma) ** 2)
    return f / math.sqrt(float(np.sum(f * f)))


def lag_one_correlation(spec: FieldSpec) -> float:
    """Correlation of neighbouring lattice values along one axis: ``sum f(k) f(k+1)``."""
    f = kernel_1d(spec)
    return float(np.sum(f[:-1] * f[1:]))


def difference_variance(spec: FieldSpec) -> np.ndarray:
    """Per-axis ``Var(Z(s + e_k) - Z(s)) / h_k^2`` implied by the kernel."""
    rho = lag_one_correlation(spec)
    return np.array([2.0 * (1.0 - rho) / h ** 2 for h in spec.step])


def replication_rng(seed: int, replication: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replication)])))


def smooth_gaussian_fields(spec: FieldSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` independent smooth fields, shape ``(count,) + dims``."""
    r = spec.radius
    ext = tuple(m if per else m + 2 * r for m, per in zip(spec.dims, spec.periodic))
    out = rng.standard_normal((count,) + ext)
    f = kernel_1d(spec)
    for axis, per in enumerate(spec.periodic):
        out = ndimage.correlate1d(out, f, axis=axis + 1, mode="wrap" if per else "constant")
        if not per:
            out = np.take(out, range(r, r + spec.dims[axis]), axis=axis + 1)
    return out


def smooth_gaussian_field(spec: FieldSpec, rng: Optional[np.random.Generator] = None) -> ScalarLattice:
    """One smooth unit-variance field; drawn from ``spec.seed`` when no generator is given."""
    if rng is None:
        rng = replication_rng(spec.seed, 0)
    return ScalarLattice(smooth_gaussian_fields(spec, 1, rng)[0], spec.step, spec.periodic)


# per-voxel linear algebra -------------------------------------------------

def _check_pd(w: np.ndarray, what: str = "W") -> None:
    if w.shape[-1] == 1:
        bad = ~(w[..., 0, 0] > 0)
    else:
        bad = ~(np.linalg.eigvalsh(w)[..., 0] > 0)
    if np.any(bad):
        voxel = tuple(int(v) for v in np.argwhere(bad)[0])
        raise ValueError(f"{what} is not positive definite at voxel {voxel}")


def _sym_eigvals(m: np.ndarray) -> np.ndarray:
    """Eigenvalues of stacked symmetric matrices (d <= 3), descending, in closed form."""
    d = m.shape[-1]
    if d == 1:
        return m[..., 0, :].copy()
    if d == 2:
        a, b, c = m[..., 0, 0], 0.5 * (m[..., 0, 1] + m[..., 1, 0]), m[..., 1, 1]
        mid = 0.5 * (a + c)
        rad = np.hypot(0.5 * (a - c), b)
        return np.stack([mid + rad, mid - rad], axis=-1)
    if d == 3:
        a = 0.5 * (m + np.swapaxes(m, -1, -2))
        q = np.trace(a, axis1=-2, axis2=-1) / 3.0
        off = a[..., 0, 1] ** 2 + a[..., 0, 2] ** 2 + a[..., 1, 2] ** 2
        diag = (a[..., 0, 0] - q) ** 2 + (a[..., 1, 1] - q) ** 2 + (a[..., 2, 2] - q) ** 2
        p = np.sqrt((diag + 2.0 * off) / 6.0)
        safe = np.where(p > 0, p, 1.0)
        b = (a - q[..., None, None] * np.eye(3)) / safe[..., None, None]
        r = np.clip(np.linalg.det(b) / 2.0, -1.0, 1.0)
        phi = np.arccos(r) / 3.0
        e1 = q + 2.0 * p * np.cos(phi)
        e3 = q + 2.0 * p * np.cos(phi + 2.0 * math.pi / 3.0)
        e2 = 3.0 * q - e1 - e3
        return np.stack([e1, e2, e3], axis=-1)
    raise ValueError(f"closed-form roots support d <= 3, got {d}")


def generalized_roots(v: np.ndarray, w: Optional[np.ndarray], eta: float = 1.0,
                      nu: Optional[float] = 1.0) -> np.ndarray:
    """Roots of ``V u / eta = W u lambda / nu``, i.e. eigenvalues of ``(nu/eta) W^{-1} V``.

    ``v`` and ``w`` are stacked ``(..., d, d)`` arrays; ``w=None`` (or
    ``nu=None``) means ``W / nu = I``. Roots come back sorted descending
    along the last axis.
    """
    v = np.asarray(v, dtype=float)
    a = v / eta
    if w is not None and nu is not None:
        w = np.asarray(w, dtype=float)
        _check_pd(w)
        chol = np.linalg.cholesky(w / nu)
        half = np.linalg.solve(chol, a)
        a = np.linalg.solve(chol, np.swapaxes(half, -1, -2))
    roots = _sym_eigvals(a)
    if roots.shape[-1] > 1:
        ties = np.count_nonzero(np.min(-np.diff(roots, axis=-1), axis=-1) < TIE_GAP)
        if ties:
            log.info("%d voxels have near-tied roots (gap < %g)", ties, TIE_GAP)
    return roots


def root_parity_ec(roots: Sequence[float], t: float) -> int:
    """EC of the sphere excursion at one point: 2 if an odd number of roots reach t, else 0."""
    return 2 * (int(np.count_nonzero(np.asarray(roots) >= t)) % 2)


def component_count(stat: StatDescriptor) -> int:
    """Number of i.i.d. unit Gaussian fields needed to build ``stat``."""
    k = stat.kind
    if k is StatKind.GAUSSIAN:
        return 1
    if k is StatKind.CHI2:
        return stat.d
    if k is StatKind.T:
        return stat.nu + 1
    if k is StatKind.F:
        return stat.eta + stat.nu
    if k is StatKind.HOTELLING:
        return stat.d * (stat.nu + 1)
    if k is StatKind.ROY:
        return stat.d * (stat.eta + stat.nu)
    if k is StatKind.MAXCORR:
        return stat.n * (stat.eta + stat.d)
    raise ValueError(f"no simulation recipe for {k.value} fields")


def _outer_sum(z: np.ndarray) -> np.ndarray:
    # z has shape (count, d) + dims; returns sum_k z_k z_k' with shape dims + (d, d)
    return np.einsum("ki...,kj...->...ij", z, z)


def build_statistic_field(stat: StatDescriptor, comps: np.ndarray, step=None, periodic=None,
                          return_min_root: bool = False):
    """Voxelwise statistic from i.i.d. component fields of shape ``(k,) + dims``.

    Returns a :class:`ScalarLattice`; with ``return_min_root`` (Roy only) a
    pair ``(max root field, min root field)``.
    """
    comps = np.asarray(comps, dtype=float)
    need = component_count(stat)
    if comps.shape[0] != need:
        raise ValueError(f"{stat.kind.value} needs {need} component fields, got {comps.shape[0]}")
    dims = comps.shape[1:]
    k = stat.kind
    min_root = None
    if k is StatKind.GAUSSIAN:
        out = comps[0].copy()
    elif k is StatKind.CHI2:
        out = np.sum(comps * comps, axis=0)
    elif k is StatKind.T:
        out = comps[0] / np.sqrt(np.sum(comps[1:] ** 2, axis=0) / stat.nu)
    elif k is StatKind.F:
        num = np.sum(comps[:stat.eta] ** 2, axis=0) / stat.eta
        out = num / (np.sum(comps[stat.eta:] ** 2, axis=0) / stat.nu)
    elif k is StatKind.HOTELLING:
        d = stat.d
        z = np.moveaxis(comps[:d], 0, -1)
        w = _outer_sum(comps[d:].reshape((stat.nu, d) + dims))
        _check_pd(w)
        out = stat.nu * np.einsum("...i,...i->...", z, np.linalg.solve(w, z[..., None])[..., 0])
    elif k is StatKind.ROY:
        d = stat.d
        g = comps.reshape((stat.eta + stat.nu, d) + dims)
        roots = generalized_roots(_outer_sum(g[:stat.eta]), _outer_sum(g[stat.eta:]), stat.eta, stat.nu)
        out, min_root = roots[..., 0], roots[..., -1]
    elif k is StatKind.MAXCORR:
        n, c, d = stat.n, stat.eta, stat.d
        x = comps[: n * c].reshape((n, c) + dims)
        y = comps[n * c:].reshape((n, d) + dims)
        xx = _outer_sum(x)
        yy = _outer_sum(y)
        xy = np.einsum("ki...,kj...->...ij", x, y)
        _check_pd(xx, "X'X")
        v = np.swapaxes(xy, -1, -2) @ np.linalg.solve(xx, xy)
        r2 = generalized_roots(v, yy)[..., 0]
        out = np.sqrt(np.clip(r2, 0.0, 1.0))
    else:
        raise ValueError(f"no simulation recipe for {k.value} fields")
    field = ScalarLattice(out, step, periodic)
    if return_min_root:
        if min_root is None:
            raise ValueError("minimum root field only exists for Roy fields")
        return field, ScalarLattice(min_root, step, periodic)
    return field


def joint_su_field(v: np.ndarray, w: Optional[np.ndarray], eta: float, nu: Optional[float],
                   n_theta: int = 256) -> ScalarLattice:
    """Unwrapped ``T(s, u) = (u'Vu/eta) / (u'Wu/nu)`` on an ``(s, theta)`` lattice.

    ``v``, ``w`` have shape ``(m, 2, 2)`` along a 1-D s-grid and
    ``u = (sin theta, cos theta)`` with theta uniform on ``[0, 2 pi)``; the
    theta axis is periodic.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 3 or v.shape[1:] != (2, 2):
        raise ValueError("joint field needs a 1-D grid of 2x2 matrices")
    theta = 2.0 * math.pi * np.arange(n_theta) / n_theta
    u = np.stack([np.sin(theta), np.cos(theta)], axis=-1)
    num = np.einsum("ti,sij,tj->st", u, v, u) / eta
    if w is None or nu is None:
        den = 1.0
    else:
        den = np.einsum("ti,sij,tj->st", u, np.asarray(w, dtype=float), u) / nu
    return ScalarLattice(num / den, (1.0, 2.0 * math.pi / n_theta), (False, True))


def unwrapped_replication(stat: StatDescriptor, spec: FieldSpec, thresholds: Sequence[float],
                       replication: int, n_theta: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Joint-field EC and ``2 * (EC(max root) - EC(min root))`` for one 1-D replication.

    Works for Hotelling (rank-one numerator, so the min root is 0) and Roy
    fields with ``d = 2``.
    """
    if len(spec.dims) != 1 or stat.d != 2:
        raise ValueError("the unwrapped check needs a 1-D lattice and d = 2")
    rng = replication_rng(spec.seed, replication)
    comps = smooth_gaussian_fields(spec, component_count(stat), rng)
    m = spec.dims[0]
    if stat.kind is StatKind.HOTELLING:
        z = comps[:2]
        v = _outer_sum(z[None])
        w = _outer_sum(comps[2:].reshape((stat.nu, 2, m)))
        eta, nu = 1, stat.nu
    elif stat.kind is StatKind.ROY:
        g = comps.reshape((stat.eta + stat.nu, 2, m))
        v, w = _outer_sum(g[:stat.eta]), _outer_sum(g[stat.eta:])
        eta, nu = stat.eta, stat.nu
    else:
        raise ValueError("unwrapped check applies to Hotelling and Roy fields")
    roots = generalized_roots(v, w, eta, nu)
    joint = ec_curve(joint_su_field(v, w, eta, nu, n_theta), thresholds).observed_ec
    ec_max = ec_curve(ScalarLattice(roots[:, 0]), thresholds).observed_ec
    ec_min = ec_curve(ScalarLattice(roots[:, 1]), thresholds).observed_ec
    return joint, 2 * (ec_max - ec_min)


def unwrapped_agreement(stat: StatDescriptor, spec: FieldSpec, thresholds: Sequence[float],
                     replications: int, n_theta: int = 256) -> float:
    """Fraction of (replication, threshold) pairs where the unwrapped identity holds exactly."""
    hits = 0
    total = 0
    for rep in range(replications):
        joint, pred = unwrapped_replication(stat, spec, thresholds, rep, n_theta)
        miss = np.flatnonzero(joint != pred)
        for j in miss:
            log.debug("replication %d, t=%g: joint EC %d vs %d", rep, thresholds[j], joint[j], pred[j])
        hits += joint.size - miss.size
        total += joint.size
    return hits / total


# Monte Carlo EC ------------------------------------------------------------

CHUNK = 8


def _run_chunk(stat: StatDescriptor, spec: FieldSpec, thresholds: np.ndarray, reps: range):
    acc = LKCAccumulator(spec.dims)
    rows = []
    k = component_count(stat)
    for rep in reps:
        comps = smooth_gaussian_fields(spec, k, replication_rng(spec.seed, rep))
        field = build_statistic_field(stat, comps, spec.step, spec.periodic)
        rows.append(ec_curve(field, thresholds).observed_ec)
        acc.add(comps)
    return np.array(rows), acc


def _pairwise_merge(accs: list[LKCAccumulator]) -> LKCAccumulator:
    while len(accs) > 1:
        nxt = [a.merge(b) for a, b in zip(accs[::2], accs[1::2])]
        if len(accs) % 2:
            nxt.append(accs[-1])
        accs = nxt
    return accs[0]


def monte_carlo_ec(stat: StatDescriptor, spec: FieldSpec, thresholds: Sequence[float],
                   replications: int, threads: int = 1,
                   derivative_variance: Optional[float] = None) -> ECCurve:
    """Mean observed EC over replications, with SEs and the expected EC.

    By default the expected EC uses box LKCs estimated from all simulated
    component fields; pass ``derivative_variance`` to use the analytic box
    scaled by ``c^{1/2}`` per unit length instead.
    """
    if replications < 1:
        raise ValueError("need at least one replication")
    if any(spec.periodic):
        raise ValueError("Monte Carlo EC comparison needs a non-periodic box")
    thresholds = np.asarray(thresholds, dtype=float)
    chunks = [range(a, min(a + CHUNK, replications)) for a in range(0, replications, CHUNK)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda r: _run_chunk(stat, spec, thresholds, r), chunks))
    else:
        results = [_run_chunk(stat, spec, thresholds, r) for r in chunks]
    ecs = np.vstack([r[0] for r in results])
    acc = _pairwise_merge([r[1] for r in results])
    mean = ecs.mean(axis=0)
    se = ecs.std(axis=0, ddof=1) / math.sqrt(replications) if replications > 1 else np.zeros_like(mean)
    if derivative_variance is None:
        region = acc.box_region()
        source = "estimated"
    else:
        sides = [(m - 1) * h * math.sqrt(derivative_variance) for m, h in zip(spec.dims, spec.step)]
        region = box_region(sides)
        source = "analytic"
    expected = np.array([expected_ec(PValueQuery(stat, region, float(t))) for t in thresholds])
    meta = {
        "stat": stat.to_dict(),
        "dims": list(spec.dims),
        "step": list(spec.step),
        "sigma": spec.sigma,
        "truncation_radius": spec.radius,
        "seed": spec.seed,
        "replications": replications,
        "rng": RNG_NAME,
        "lkc": list(region.lkc),
        "lkc_source": source,
        "lkc_top_estimate": acc.lkc_top(),
        "component_fields_per_replication": component_count(stat),
    }
    return ECCurve(thresholds, mean, expected, se, meta)


def parse_thresholds(text: str) -> np.ndarray:
    """``"start:step:stop"`` (stop inclusive) or a comma list."""
    if ":" in text:
        a, c, b = (float(x) for x in text.split(":"))
        if c <= 0:
            raise ValueError("threshold step must be positive")
        n = int(math.floor((b - a) / c + 1e-9)) + 1
        return a + c * np.arange(n)
    return np.array(sorted(float(x) for x in text.split(",")))
