"""Intrinsic volumes and Lipschitz-Killing curvatures of search regions.

A :class:`SearchRegion` is nothing more than a vector of LKCs
``(L_0, ..., L_N)``; everything the expected-EC formula needs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class SearchRegion:
    """LKCs ``(L_0, ..., L_N)`` of an ``N``-dimensional search region."""

    lkc: tuple[float, ...]

    def __post_init__(self):
        lkc = tuple(float(v) for v in self.lkc)
        if not lkc:
            raise ValueError("a search region needs at least L_0")
        if lkc[-1] < 0:
            raise ValueError("top LKC must be nonnegative")
        object.__setattr__(self, "lkc", lkc)

    @property
    def dim(self) -> int:
        return len(self.lkc) - 1

    def __getitem__(self, i):
        return self.lkc[i]

    def __len__(self):
        return len(self.lkc)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "lkc": list(self.lkc)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict) -> "SearchRegion":
        region = cls(tuple(obj["lkc"]))
        if "dim" in obj and int(obj["dim"]) != region.dim:
            raise ValueError(f"dim {obj['dim']} does not match {len(region.lkc)} LKCs")
        return region

    @classmethod
    def from_json(cls, text: str) -> "SearchRegion":
        return cls.from_dict(json.loads(text))


POINT = SearchRegion((1.0,))


def sphere_measure(k: int) -> float:
    """Surface measure ``a_k = 2 pi^{k/2} / Gamma(k/2)`` of the unit sphere in R^k."""
    if k < 1:
        raise ValueError(f"sphere_measure requires k >= 1, got {k}")
    return 2.0 * math.exp(0.5 * k * math.log(math.pi) - math.lgamma(0.5 * k))


@lru_cache(maxsize=None)
def sphere_intrinsic_volumes(d: int) -> tuple[float, ...]:
    """Intrinsic volumes ``(mu_0, ..., mu_{d-1})`` of the unit sphere ``U_d`` in R^d.

    ``mu_j(U_d) = 2 C(d-1, j) a_d / a_{d-j}`` when ``d - 1 - j`` is even and
    zero otherwise. ``mu_d(U_d) = 0`` and is not included.
    """
    if d < 1:
        raise ValueError(f"sphere dimension must be >= 1, got {d}")
    a_d = sphere_measure(d)
    return tuple(
        2.0 * math.comb(d - 1, j) * a_d / sphere_measure(d - j) if (d - 1 - j) % 2 == 0 else 0.0
        for j in range(d)
    )


def product_intrinsic_volumes(a: SearchRegion, b: SearchRegion) -> SearchRegion:
    """Intrinsic volumes of a product set: ``mu_k(A x B) = sum_i mu_i(A) mu_{k-i}(B)``."""
    return SearchRegion(tuple(np.convolve(a.lkc, b.lkc)))


def sphere_region(d: int) -> SearchRegion:
    """The unit sphere ``U_d`` as a (d)-dimensional region with ``mu_d = 0``."""
    return SearchRegion(sphere_intrinsic_volumes(d) + (0.0,))


def box_region(sides: Sequence[float]) -> SearchRegion:
    """LKCs of a rectangular box: elementary symmetric polynomials of the sides."""
    region = POINT
    for s in sides:
        if not s > 0:
            raise ValueError(f"box sides must be positive, got {s}")
        region = product_intrinsic_volumes(region, SearchRegion((1.0, float(s))))
    return region


def ball_region(n_dim: int, top_lkc: float) -> SearchRegion:
    """Region with the LKCs of a ball whose ``n_dim``-volume is ``top_lkc``.

    The short-cut used when only the top LKC has been estimated: a ball has
    the smallest lower-order intrinsic volumes for a given volume, so the
    resulting P-values are slightly liberal.
    """
    if not top_lkc > 0:
        raise ValueError(f"top LKC must be positive, got {top_lkc}")
    if n_dim == 1:
        return SearchRegion((1.0, top_lkc))
    if n_dim == 2:
        r = math.sqrt(top_lkc / math.pi)
        return SearchRegion((1.0, math.pi * r, top_lkc))
    if n_dim == 3:
        r = (3.0 * top_lkc / (4.0 * math.pi)) ** (1.0 / 3.0)
        return SearchRegion((1.0, 4.0 * r, 2.0 * math.pi * r * r, top_lkc))
    raise ValueError(f"ball short-cut supports 1, 2 or 3 dimensions, got {n_dim}")


def _scale_coef(w1: float, w2: float, m: int) -> float:
    # (w1^{-m} - w2^{-m}) / m, with the m = 0 limit log(w2 / w1)
    if m == 0:
        return math.log(w2 / w1)
    return (w1 ** (-m) - w2 ** (-m)) / m


def scale_space_lkc(s: SearchRegion, w1: float, w2: float, kappa: float) -> SearchRegion:
    """LKCs of ``S x [w1, w2]`` for a Gaussian scale-space field.

    Chosen so that ``sum_i L_i rho^G_i(t)`` reproduces the scale-space
    expected EC ``sum_i mu_i(S) rho^S_i(t)`` term by term.
    """
    if not (0 < w1 <= w2):
        raise ValueError(f"need 0 < w1 <= w2, got w1={w1}, w2={w2}")
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    n = s.dim
    mu = s.lkc
    out = [mu[0]]
    for i in range(1, n + 2):
        val = 0.5 * (w1 ** (-i) + w2 ** (-i)) * mu[i] if i <= n else 0.0
        for j in range((n - i + 1) // 2 + 1):
            m = i + 2 * j - 1
            coef = (
                kappa ** ((1 - 2 * j) / 2.0) * (-1) ** j * math.factorial(m)
                / ((1 - 2 * j) * (4.0 * math.pi) ** j * math.factorial(j) * math.factorial(i - 1))
            )
            val += _scale_coef(w1, w2, m) * coef * mu[m]
        out.append(val)
    return SearchRegion(tuple(out))
