"""Euler-characteristic densities.

Every non-Gaussian density here is assembled from two primitives: the
Gaussian density ``rho_gaussian`` and the cross-correlation field density
``rho_corr``. The t, F, Hotelling, Roy and chi-square densities follow by
maximizing over unit spheres of directions and taking products of intrinsic
volumes, so each wrapper is a short weighted sum.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .geometry import sphere_intrinsic_volumes
from .specfun import gaussian_upper_tail, reg_inc_beta


class StatKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    T = "t"
    CHI2 = "chi2"
    F = "f"
    HOTELLING = "hotelling"
    ROY = "roy"
    MAXCORR = "maxcorr"
    MULTILINEAR = "multilinear"
    SCALE_SPACE_GAUSSIAN = "scale_space_gaussian"
    SCALE_SPACE_CHI2 = "scale_space_chi2"


# fields each kind requires; anything else must be left unset
_REQUIRED = {
    StatKind.GAUSSIAN: (),
    StatKind.T: ("nu",),
    StatKind.CHI2: ("d",),
    StatKind.F: ("eta", "nu"),
    StatKind.HOTELLING: ("d", "nu"),
    StatKind.ROY: ("d", "eta", "nu"),
    StatKind.MAXCORR: ("d", "eta", "n"),
    StatKind.MULTILINEAR: ("dims",),
    StatKind.SCALE_SPACE_GAUSSIAN: ("w1", "w2", "kappa"),
    StatKind.SCALE_SPACE_CHI2: ("d", "w1", "w2", "kappa"),
}
_ALL_FIELDS = ("d", "eta", "nu", "n", "dims", "w1", "w2", "kappa")


@dataclass(frozen=True)
class StatDescriptor:
    """Which statistic field, and its parameters.

    For ``MAXCORR`` the two sides have ``eta`` (= c) and ``d`` columns and
    ``n`` rows. ``dims`` holds ``d_1..d_D`` for multilinear forms.
    """

    kind: StatKind
    d: Optional[int] = None
    eta: Optional[int] = None
    nu: Optional[int] = None
    n: Optional[int] = None
    dims: Optional[tuple[int, ...]] = None
    w1: Optional[float] = None
    w2: Optional[float] = None
    kappa: Optional[float] = None

    def __post_init__(self):
        kind = StatKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.dims is not None:
            object.__setattr__(self, "dims", tuple(int(v) for v in self.dims))
        required = _REQUIRED[kind]
        for name in _ALL_FIELDS:
            value = getattr(self, name)
            if name in required and value is None:
                raise ValueError(f"{kind.value} statistic requires '{name}'")
            if name not in required and value is not None:
                raise ValueError(f"'{name}' is not a parameter of the {kind.value} statistic")
        for name in ("d", "eta", "nu", "n"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ValueError(f"'{name}' must be positive, got {value}")
        if kind is StatKind.MULTILINEAR and (not self.dims or min(self.dims) < 1):
            raise ValueError("multilinear dims must be a nonempty list of positive ints")
        if kind is StatKind.MAXCORR and self.n <= max(self.eta, self.d):
            raise ValueError("max canonical correlation needs n > max(c, d)")
        if kind in (StatKind.SCALE_SPACE_GAUSSIAN, StatKind.SCALE_SPACE_CHI2):
            if not (0 < self.w1 <= self.w2):
                raise ValueError("need 0 < w1 <= w2")
            if not self.kappa > 0:
                raise ValueError("kappa must be positive")

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value}
        for name, value in asdict(self).items():
            if name != "kind" and value is not None:
                out[name] = list(value) if name == "dims" else value
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict) -> "StatDescriptor":
        return cls(**obj)

    @classmethod
    def from_json(cls, text: str) -> "StatDescriptor":
        return cls.from_dict(json.loads(text))


def _require_nonneg(t: float, what: str):
    if t < 0:
        raise ValueError(f"{what} EC density is defined for t >= 0, got {t}")


def hermite_prob(k: int, t: float) -> float:
    """Probabilists' Hermite polynomial He_k(t) by the three-term recurrence."""
    if k < 0:
        raise ValueError("Hermite degree must be >= 0")
    prev, cur = 1.0, t
    if k == 0:
        return prev
    for m in range(1, k):
        prev, cur = cur, t * cur - m * prev
    return cur


def rho_gaussian(i: int, t: float) -> float:
    """EC density of a unit Gaussian field: ``(2 pi)^{-(i+1)/2} He_{i-1}(t) e^{-t^2/2}``."""
    if i < 0:
        raise ValueError("EC density order must be >= 0")
    if i == 0:
        return gaussian_upper_tail(t)
    if math.isinf(t):
        return 0.0
    return (2.0 * math.pi) ** (-(i + 1) / 2.0) * hermite_prob(i - 1, t) * math.exp(-0.5 * t * t)


def rho_gaussian_scaled(i: int, t: float, c: float) -> float:
    """Gaussian density for a field with derivative variance ``c I``."""
    if not c > 0:
        raise ValueError("derivative variance c must be positive")
    return c ** (i / 2.0) * rho_gaussian(i, t)


def _lfact(x: int) -> float:
    return math.lgamma(x + 1)


@lru_cache(maxsize=4096)
def _corr_terms(i: int, j: int, n: int) -> tuple[tuple[int, float, float, float], ...]:
    """Per-k terms of the correlation density for ``i > 0``.

    Each entry is ``(sign, log|coef|, t power, (1 - t^2) power)``.
    """
    h = i + j
    log_pre = (n - 2 - h) * math.log(2.0) + _lfact(i - 1) + _lfact(j) - (h / 2.0 + 1.0) * math.log(math.pi)
    out = []
    for k in range((h - 1) // 2 + 1):
        logs = []
        for l in range(k + 1):
            for m in range(k + 1):
                facts = (l, m, k - l - m, n - 1 - h + l + m + k, i - 1 - k - l + m, j - k - m + l)
                if min(facts) < 0:
                    continue
                logs.append(
                    math.lgamma((n - i) / 2.0 + l) + math.lgamma((n - j) / 2.0 + m)
                    - sum(_lfact(f) for f in facts)
                )
        if not logs:
            continue
        top = max(logs)
        log_inner = top + math.log(math.fsum(math.exp(v - top) for v in logs))
        out.append(((-1) ** k, log_pre + log_inner, h - 1 - 2 * k, (n - 1 - h) / 2.0 + k))
    return tuple(out)


def rho_corr(i: int, j: int, t: float, n: int) -> float:
    """EC density of the cross-correlation field of two UGRF matrices with ``n`` rows.

    ``i`` and ``j`` are the dimensions taken from the two parameter sets.
    ``rho_00`` is the one-sided point probability ``P(r >= t)``.
    """
    if i < 0 or j < 0:
        raise ValueError("EC density orders must be >= 0")
    if n <= i + j or n < 2:
        raise ValueError(f"correlation field needs n > i + j and n >= 2, got n={n}, i+j={i + j}")
    if not (-1.0 < t < 1.0):
        raise ValueError(f"correlation threshold must lie in (-1, 1), got {t}")
    if i == 0 and j == 0:
        # P(r^2 >= t^2) for r^2 ~ Beta(1/2, (n-1)/2), halved for one side
        t2 = t * t
        if t2 < 0.5:
            half = 0.5 * (1.0 - reg_inc_beta(t2, 0.5, (n - 1) / 2.0))
        else:
            half = 0.5 * reg_inc_beta(1.0 - t2, (n - 1) / 2.0, 0.5)
        return half if t >= 0 else 1.0 - half
    # evaluate with i >= j so the result is exactly symmetric (and i > 0)
    if i < j:
        i, j = j, i
    log_one_minus = math.log1p(-t * t)
    parts = []
    for sign, log_coef, tpow, opow in _corr_terms(i, j, n):
        if tpow > 0 and t == 0.0:
            continue
        tsign = -1.0 if (t < 0 and tpow % 2 == 1) else 1.0
        log_t = tpow * math.log(abs(t)) if tpow > 0 else 0.0
        parts.append(sign * tsign * math.exp(log_coef + log_t + opow * log_one_minus))
    return math.fsum(parts)


def rho_t(i: int, t: float, nu: int) -> float:
    """EC density of a Student t field, via the correlation field with ``n = nu + 1``."""
    if nu < 1:
        raise ValueError("nu must be >= 1")
    if nu + 1 <= i:
        raise ValueError(f"t field with nu={nu} has no EC density of order {i}")
    if math.isinf(t):
        return (0.0 if t > 0 else 1.0) if i == 0 else 0.0
    return rho_corr(0, i, t / math.sqrt(nu + t * t), nu + 1)


def _clip_order0(i: int, value: float) -> float:
    # order-0 sums are tail probabilities; keep rounding from leaving [0, 1]
    return min(max(value, 0.0), 1.0) if i == 0 else value


def rho_chi2(i: int, t: float, d: int) -> float:
    """EC density of a chi-square field with ``d`` degrees of freedom."""
    _require_nonneg(t, "chi-square")
    root = math.sqrt(t)
    return _clip_order0(i, math.fsum(
        mu * rho_gaussian(i + j, root) for j, mu in enumerate(sphere_intrinsic_volumes(d)) if mu))


def rho_f(i: int, t: float, eta: int, nu: int) -> float:
    """EC density of an F field with ``(eta, nu)`` degrees of freedom."""
    _require_nonneg(t, "F")
    if math.isinf(t):
        return 0.0
    r = math.sqrt(t * eta / (t * eta + nu))
    if r >= 1.0:
        return 0.0
    n = eta + nu
    return _clip_order0(i, math.fsum(
        mu * rho_corr(k, i, r, n) for k, mu in enumerate(sphere_intrinsic_volumes(eta)) if mu))


def rho_hotelling(i: int, t: float, d: int, nu: int) -> float:
    """EC density of Hotelling's T^2 field with ``d`` components and ``nu`` df."""
    _require_nonneg(t, "Hotelling")
    if nu < d:
        raise ValueError(f"Hotelling's T^2 needs nu >= d, got nu={nu}, d={d}")
    root = math.sqrt(t)
    return _clip_order0(i, math.fsum(
        mu * rho_t(i + j, root, nu) for j, mu in enumerate(sphere_intrinsic_volumes(d)) if mu))


def rho_roy(i: int, t: float, d: int, eta: int, nu: int) -> float:
    """Twice the alternating sum of the root EC densities for Roy's maximum root.

    Not the EC density of the maximum root itself; the P-value approximation
    uses half of it.
    """
    _require_nonneg(t, "Roy")
    return math.fsum(mu * rho_f(i + j, t, eta, nu) for j, mu in enumerate(sphere_intrinsic_volumes(d)) if mu)


def sphere_product_weights(dims: Sequence[int]) -> np.ndarray:
    """Weights ``w_k = sum_{k_1+..+k_D=k} prod_j mu_{k_j}(U_{d_j})``."""
    weights = np.array([1.0])
    for d in dims:
        weights = np.convolve(weights, sphere_intrinsic_volumes(d))
    return weights


def rho_multilinear(i: int, t: float, dims: Sequence[int]) -> float:
    """EC density of the maximum multilinear form field (before the 2^{-(D-1)} factor)."""
    if not dims or min(dims) < 1:
        raise ValueError("dims must be a nonempty list of positive ints")
    weights = sphere_product_weights(dims)
    return sum(w * rho_gaussian(i + k, t) for k, w in enumerate(weights) if w)


def rho_scale_space(
    i: int,
    t: float,
    w1: float,
    w2: float,
    kappa: float,
    base: str = "gaussian",
    d: Optional[int] = None,
) -> float:
    """EC density of a scale-space field searched over filter widths ``[w1, w2]``.

    ``base`` is ``"gaussian"`` or ``"chi2"`` (with ``d`` degrees of freedom);
    its fixed-scale densities replace the Gaussian ones.
    """
    if not (0 < w1 <= w2):
        raise ValueError(f"need 0 < w1 <= w2, got w1={w1}, w2={w2}")
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    if base == "gaussian":
        def rho(k):
            return rho_gaussian(k, t)
    elif base == "chi2":
        if d is None:
            raise ValueError("chi2 base needs d")

        def rho(k):
            return rho_chi2(k, t, d)
    else:
        raise ValueError(f"unknown scale-space base {base!r}")

    val = 0.5 * (w1 ** (-i) + w2 ** (-i)) * rho(i)
    scale = math.log(w2 / w1) if i == 0 else (w1 ** (-i) - w2 ** (-i)) / i
    if scale == 0.0:
        return val
    acc = 0.0
    for j in range(i // 2 + 1):
        acc += (
            kappa ** ((1 - 2 * j) / 2.0) * (-1) ** j * math.factorial(i)
            / ((1 - 2 * j) * (4.0 * math.pi) ** j * math.factorial(j) * math.factorial(i - 2 * j))
            * rho(i + 1 - 2 * j)
        )
    return val + scale * acc


def ec_density(stat: StatDescriptor, i: int, t: float) -> float:
    """Order-``i`` density of a single-region statistic.

    Returns the raw sum for Roy (``rho^R``) and multilinear forms; the
    symmetry factors are applied by the expected-EC assembly. Maximum
    canonical correlation needs two regions and is handled there.
    """
    k = stat.kind
    if k is StatKind.GAUSSIAN:
        return rho_gaussian(i, t)
    if k is StatKind.T:
        return rho_t(i, t, stat.nu)
    if k is StatKind.CHI2:
        return rho_chi2(i, t, stat.d)
    if k is StatKind.F:
        return rho_f(i, t, stat.eta, stat.nu)
    if k is StatKind.HOTELLING:
        return rho_hotelling(i, t, stat.d, stat.nu)
    if k is StatKind.ROY:
        return rho_roy(i, t, stat.d, stat.eta, stat.nu)
    if k is StatKind.MULTILINEAR:
        return rho_multilinear(i, t, stat.dims)
    if k is StatKind.SCALE_SPACE_GAUSSIAN:
        return rho_scale_space(i, t, stat.w1, stat.w2, stat.kappa)
    if k is StatKind.SCALE_SPACE_CHI2:
        return rho_scale_space(i, t, stat.w1, stat.w2, stat.kappa, base="chi2", d=stat.d)
    raise ValueError(f"{k.value} has no single-region EC density; use inference.pvalue_maxcorr")
