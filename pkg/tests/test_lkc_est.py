import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rftstat.geometry import ball_region
from rftstat.lkc_est import (LKCAccumulator, ResidualField, box_lkc, lkc_top, normalize_residuals,
                             region_from_top_lkc, whiten_components)


def random_residuals(rng, dims=(7, 6), n=9, d=2):
    return ResidualField(rng.normal(size=dims + (n, d)))


def test_normalize_unit_norms(rng):
    q = normalize_residuals(random_residuals(rng))
    norms = np.sqrt(np.einsum("...nd,...nd->...d", q.values, q.values))
    assert np.allclose(norms, 1.0, atol=1e-12)


def test_normalize_idempotent_and_scale_invariant(rng):
    r = random_residuals(rng)
    q = normalize_residuals(r)
    assert np.allclose(normalize_residuals(q).values, q.values, atol=1e-15)
    scaled = ResidualField(r.values * 7.0)
    assert np.allclose(normalize_residuals(scaled).values, q.values, atol=1e-15)


def test_normalize_zero_column_names_voxel(rng):
    r = random_residuals(rng)
    r.values[2, 3, :, 1] = 0.0
    with pytest.raises(ValueError, match=r"\(2, 3\)"):
        normalize_residuals(r)


def test_constant_field_has_zero_lkc(rng):
    v = rng.normal(size=(6, 2))
    vals = np.broadcast_to(v, (5, 4, 6, 2)).copy()
    assert lkc_top(normalize_residuals(ResidualField(vals))) == 0.0


def test_two_point_chord():
    theta = 2 * math.asin(0.15)  # chord length 0.3 on the unit circle
    vals = np.array([[[1.0], [0.0]], [[math.cos(theta)], [math.sin(theta)]]])
    q = ResidualField(vals)
    assert lkc_top(q) == pytest.approx(0.3, rel=1e-14)


def test_degenerate_df_raises(rng):
    r = ResidualField(rng.normal(size=(5, 5, 5, 4, 1)), rank=2)
    with pytest.raises(ValueError):
        lkc_top(normalize_residuals(r))
    with pytest.raises(ValueError):
        lkc_top(ResidualField(rng.normal(size=(1, 5, 4, 1))))


def test_invariant_under_component_permutation_and_signs(rng):
    q = normalize_residuals(random_residuals(rng, dims=(6, 5, 4), n=8, d=3))
    ref = lkc_top(q)
    mixed = q.values[..., [2, 0, 1]] * np.array([1.0, -1.0, -1.0])
    assert lkc_top(ResidualField(mixed)) == pytest.approx(ref, rel=1e-12)


@given(st.integers(0, 10_000), st.integers(1, 3))
def test_nonnegative(seed, ndim):
    rng = np.random.default_rng(seed)
    dims = (4,) * ndim
    q = normalize_residuals(ResidualField(rng.normal(size=dims + (ndim + 2, 2))))
    assert lkc_top(q) >= 0


def _smooth_residuals(m):
    # a fixed smooth map from [0, 1]^2 into the unit sphere of R^6
    s = np.linspace(0.0, 1.0, m)
    x, y = np.meshgrid(s, s, indexing="ij")
    comps = [np.sin(3 * x + 1), np.cos(2 * y), np.sin(x + 2 * y), np.cos(3 * x - y), x * y + 0.5, np.sin(4 * y)]
    return ResidualField(np.stack(comps, axis=-1)[..., None])


def test_refinement_is_stable():
    coarse = lkc_top(normalize_residuals(_smooth_residuals(41)))
    fine = lkc_top(normalize_residuals(_smooth_residuals(81)))
    assert abs(fine / coarse - 1) < 0.02


def test_mask_skips_points_without_forward_neighbours(rng):
    r = random_residuals(rng, dims=(6, 6), n=5, d=1)
    q = normalize_residuals(r)
    full = lkc_top(q)
    assert lkc_top(ResidualField(q.values, mask=np.ones((6, 6), bool))) == pytest.approx(full, rel=1e-14)
    mask = np.ones((6, 6), bool)
    mask[3, 3] = False
    partial = lkc_top(normalize_residuals(ResidualField(r.values, mask=mask)))
    assert 0 < partial < full


def test_accumulator_matches_direct_estimator(rng):
    fields = rng.normal(size=(12, 7, 6, 5))
    acc = LKCAccumulator((7, 6, 5))
    acc.add(fields[:5])
    acc.add(fields[5:])
    q = normalize_residuals(ResidualField(np.moveaxis(fields, 0, -1)[..., None]))
    assert acc.lkc_top() == pytest.approx(lkc_top(q), rel=1e-10)
    assert acc.box_region().lkc == pytest.approx(box_lkc(q).lkc, rel=1e-10)
    other = LKCAccumulator((7, 6, 5))
    other.add(fields[:5])
    rest = LKCAccumulator((7, 6, 5))
    rest.add(fields[5:])
    assert other.merge(rest).lkc_top() == pytest.approx(acc.lkc_top(), rel=1e-13)


def test_whitening_gives_identity_covariance(rng):
    mix = np.array([[1.0, 0.0], [0.8, 0.3]])
    r = ResidualField(rng.normal(size=(5, 5, 30, 2)) @ mix)
    w = whiten_components(r)
    flat = w.values.reshape(-1, 2)
    assert np.allclose(flat.T @ flat / flat.shape[0], np.eye(2), atol=1e-12)


def test_region_from_top_lkc():
    assert region_from_top_lkc(3, 2571.0) == ball_region(3, 2571.0)
    assert region_from_top_lkc(3, 2571.0).lkc == pytest.approx((1, 33.99, 453.8, 2571), abs=0.05)
    assert region_from_top_lkc(3, 4 * math.pi / 3).lkc == pytest.approx((1, 4, 2 * math.pi, 4 * math.pi / 3))
    assert region_from_top_lkc(1, 12.5).lkc == (1.0, 12.5)
    with pytest.raises(ValueError):
        region_from_top_lkc(3, 0.0)
