"""Expected-EC P-value approximations and familywise thresholds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from scipy.optimize import brentq

from .ecdensity import StatDescriptor, StatKind, ec_density, rho_corr
from .geometry import POINT, SearchRegion, sphere_intrinsic_volumes

# thresholds are only solved where the expected EC is a valid P-value
MAX_ALPHA = 0.2
P_TOL = 1e-10


@dataclass(frozen=True)
class PValueQuery:
    """A statistic, its search region(s) and a threshold.

    ``second_region`` is the region ``R`` searched by the ``X`` side of a
    maximum canonical correlation field; leave it ``None`` for a fixed
    reference (``R`` a point). ``halve_for_symmetric_search`` halves the
    P-value when ``X = Y`` so each pair of points is counted twice.
    """

    stat: StatDescriptor
    region: SearchRegion
    threshold: float
    second_region: Optional[SearchRegion] = None
    halve_for_symmetric_search: bool = False


def _check_domain(stat: StatDescriptor, region: SearchRegion, second: Optional[SearchRegion]):
    k = stat.kind
    if k is StatKind.F and region.dim >= stat.eta + stat.nu:
        raise ValueError("F field is not defined when N >= eta + nu")
    if k is StatKind.MAXCORR:
        m = 0 if second is None else second.dim
        top = m + region.dim + stat.eta + stat.d - 2
        if stat.n <= top:
            raise ValueError(f"max canonical correlation needs n > {top}, got n={stat.n}")
    elif second is not None:
        raise ValueError("a second region only applies to max canonical correlation")


def pvalue_maxcorr(
    region_r: SearchRegion,
    region_s: SearchRegion,
    c: int,
    d: int,
    n: int,
    t: float,
) -> float:
    """Half the expected EC of the cross-correlation field over ``R x S x U_c x U_d``.

    ``sum_i mu_i(R) sum_j mu_j(S) sum_k mu_k(U_c) sum_l mu_l(U_d) rho^C_{i+k, j+l}(t) / 2``
    """
    if not (0.0 <= t < 1.0):
        raise ValueError(f"correlation threshold must lie in [0, 1), got {t}")
    uc = sphere_intrinsic_volumes(c)
    ud = sphere_intrinsic_volumes(d)
    terms = []
    for i, mr in enumerate(region_r.lkc):
        if mr == 0:
            continue
        for j, ms in enumerate(region_s.lkc):
            if ms == 0:
                continue
            for k, mc in enumerate(uc):
                if mc == 0:
                    continue
                for l, md in enumerate(ud):
                    if md == 0:
                        continue
                    terms.append(mr * ms * mc * md * rho_corr(i + k, j + l, t, n))
    return 0.5 * math.fsum(terms)


def expected_ec_terms(q: PValueQuery) -> list[float]:
    """Per-dimension contributions ``L_i rho_i(t)`` (with symmetry factors applied).

    For max canonical correlation the contributions are grouped by the
    dimension ``j`` of the ``S`` region.
    """
    stat, region = q.stat, q.region
    _check_domain(stat, region, q.second_region)
    k = stat.kind
    if k is StatKind.MAXCORR:
        r = q.second_region if q.second_region is not None else POINT
        factor = 0.5 if q.halve_for_symmetric_search else 1.0
        out = []
        for j, ms in enumerate(region.lkc):
            unit = SearchRegion(tuple(1.0 if m == j else 0.0 for m in range(j + 1)))
            out.append(factor * ms * pvalue_maxcorr(r, unit, stat.eta, stat.d, stat.n, q.threshold) if ms else 0.0)
        return out
    if k is StatKind.ROY:
        factor = 0.5
    elif k is StatKind.MULTILINEAR:
        factor = 2.0 ** (-(len(stat.dims) - 1))
    else:
        factor = 1.0
    if q.halve_for_symmetric_search:
        factor *= 0.5
    return [factor * L * ec_density(stat, i, q.threshold) if L else 0.0 for i, L in enumerate(region.lkc)]


def expected_ec(q: PValueQuery) -> float:
    """Expected EC of the excursion set, the approximate P-value of the maximum."""
    return math.fsum(expected_ec_terms(q))


def _with_threshold(q: PValueQuery, t: float) -> PValueQuery:
    return PValueQuery(q.stat, q.region, t, q.second_region, q.halve_for_symmetric_search)


def _upper_limit(stat: StatDescriptor) -> float:
    return 1.0 if stat.kind is StatKind.MAXCORR else math.inf


def _lower_limit(stat: StatDescriptor) -> float:
    if stat.kind in (StatKind.GAUSSIAN, StatKind.T, StatKind.MULTILINEAR,
                     StatKind.SCALE_SPACE_GAUSSIAN):
        return -math.inf
    return 0.0


def _expand_upper(f, start: float, limit: float, alpha: float) -> float:
    # double the step (or halve the gap to a finite limit) until f drops below alpha
    t = start
    step = max(1.0, abs(start))
    for _ in range(200):
        if f(t) < alpha:
            return t
        if math.isinf(limit):
            t = t + step
            step *= 2.0
        else:
            t = t + 0.5 * (limit - t)
    raise ValueError("expected EC never falls below alpha")


def _solve(f, alpha: float, lo: float, hi: float) -> float:
    t = brentq(lambda x: f(x) - alpha, lo, hi, xtol=1e-14, maxiter=500)
    if abs(f(t) - alpha) > P_TOL:
        # brentq stopped on xtol in a very steep tail; finish by bisection
        a, b = lo, hi
        for _ in range(400):
            t = 0.5 * (a + b)
            ft = f(t)
            if abs(ft - alpha) <= P_TOL or b - a < 1e-15 * max(1.0, abs(t)):
                break
            if ft > alpha:
                a = t
            else:
                b = t
    return t


def _point_query(q: PValueQuery) -> PValueQuery:
    return PValueQuery(
        q.stat, POINT, q.threshold,
        POINT if q.second_region is not None else None,
        q.halve_for_symmetric_search,
    )


def point_quantile(q: PValueQuery, alpha: float) -> float:
    """Threshold at which the per-point (zero-dimensional) term alone equals ``alpha``."""
    point = _point_query(q)

    def f(t):
        return expected_ec(_with_threshold(point, t))

    limit = _upper_limit(q.stat)
    start = 0.0 if _lower_limit(q.stat) == 0.0 else -10.0
    if f(start) < alpha:
        return start
    hi = _expand_upper(f, max(start, 0.0) + (0.5 if math.isfinite(limit) else 1.0), limit, alpha)
    return _solve(f, alpha, start, hi)


SCAN_POINTS = 512
DEEP_TAIL = 1e-8


def threshold(
    stat: StatDescriptor,
    region: SearchRegion,
    alpha: float,
    second_region: Optional[SearchRegion] = None,
    halve_for_symmetric_search: bool = False,
) -> float:
    """Threshold ``t`` at which the expected EC equals ``alpha``.

    Returns the largest such ``t``. The search interval runs from the
    per-point quantile (below the familywise threshold) up to a point deep
    in the monotone tail; the interval is scanned downward for the first
    value with expected EC >= alpha and the crossing is refined to
    ``|E(phi) - alpha| <= 1e-10``. Scanning from the top matters because the
    expected EC of large product regions oscillates through negative values
    below the tail.
    """
    if not (0.0 < alpha <= MAX_ALPHA):
        raise ValueError(f"alpha must lie in (0, {MAX_ALPHA}], got {alpha}")
    _check_domain(stat, region, second_region)
    base = PValueQuery(stat, region, 0.0, second_region, halve_for_symmetric_search)

    def f(t):
        return expected_ec(_with_threshold(base, t))

    limit = _upper_limit(stat)
    lo = point_quantile(base, alpha)
    far = max(point_quantile(base, alpha * DEEP_TAIL), lo)
    far = _expand_upper(f, far, limit, alpha)
    grid = [lo + (far - lo) * k / SCAN_POINTS for k in range(SCAN_POINTS + 1)]
    upper = far
    for t in reversed(grid[:-1]):
        ft = f(t)
        if ft >= alpha:
            return _solve(f, alpha, t, upper)
        upper = t
    raise ValueError("expected EC does not reach alpha above the per-point quantile")
