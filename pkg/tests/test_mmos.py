import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from octotopo import mmos
from fd_oracle import max_rel_error, weighted_density_gradient
from octotopo.checks import check_density_gradients, random_mask_instance
from octotopo.mmos import MmosParams

finite = st.floats(-5.0, 5.0, allow_nan=False)
mask_st = st.tuples(*[finite] * 6, st.floats(0.0, 5.0)).map(np.array)


def test_phi_sphere_centre():
    assert mmos.phi([0, 0, 0, 0, 0, 0, 3], np.zeros(3)) == pytest.approx(-3.0)


def test_phi_vertex_on_surface():
    m = np.array([-1, 0, 0, 1, 0, 0, 2.0])
    assert mmos.phi(m, np.array([2.0, 0, 0])) == pytest.approx(0.0, abs=1e-15)
    assert mmos.semi_axes(m) == pytest.approx((2.0, np.sqrt(3.0)))


def test_semi_axes_special_cases():
    assert mmos.semi_axes([1, 1, 1, 1, 1, 1, 3]) == pytest.approx((1.5, 1.5))
    assert mmos.semi_axes([0, 0, 0, 4, 0, 0, 0]) == pytest.approx((2.0, 0.0))
    assert mmos.semi_axes([0, 0, 0, 4, 0, 0, -1]) == (0.0, 0.0)


@given(mask_st, st.floats(0, 2 * np.pi), st.floats(0, np.pi))
@settings(max_examples=100, deadline=None)
def test_parametric_surface_has_zero_phi(mask, t, s):
    a, b = mmos.semi_axes(mask)
    f1, f2 = mask[:3], mask[3:6]
    c = 0.5 * (f1 + f2)
    axis = f2 - f1
    n = np.linalg.norm(axis)
    e1 = axis / n if n > 1e-9 else np.array([1.0, 0, 0])
    e2 = np.cross(e1, [0.0, 0, 1]) if abs(e1[2]) < 0.9 else np.cross(e1, [1.0, 0, 0])
    e2 /= np.linalg.norm(e2)
    e3 = np.cross(e1, e2)
    x = c + a * np.cos(s) * e1 + b * np.sin(s) * (np.cos(t) * e2 + np.sin(t) * e3)
    assert abs(mmos.phi(mask, x)) < 1e-12 * max(1.0, a)


def test_mask_value():
    p = MmosParams(alpha=3.0)
    assert mmos.mask_value([0, 0, 0, 0, 0, 0, 0], np.zeros(3), p) == pytest.approx(0.5)
    m = [0, 0, 0, 0, 0, 0, 10]
    assert mmos.mask_value(m, np.zeros(3), p) == pytest.approx(1 / (1 + np.exp(30)), rel=1e-10)
    assert mmos.mask_value(m, np.zeros(3), p) == pytest.approx(9.36e-14, rel=1e-3)


@given(st.floats(0.01, 10.0), st.floats(1.0, 10.0), st.floats(0.01, 5.0))
@settings(max_examples=50, deadline=None)
def test_mask_value_monotone_in_alpha(phi_pos, alpha, dalpha):
    m = np.array([0, 0, 0, 0, 0, 0, 1.0])
    x = np.array([1.0 + phi_pos, 0, 0])
    lo = mmos.mask_value(m, x, MmosParams(alpha=alpha))
    hi = mmos.mask_value(m, x, MmosParams(alpha=alpha + dalpha))
    assert 0.5 < lo <= hi <= 1.0


def test_density_limits(mesh_factory):
    mesh = mesh_factory(3)
    c = mesh.centroids
    assert np.all(mmos.density(np.empty((0, 7)), c) == 1.0)
    e = 7
    sphere = np.concatenate([c[e], c[e], [3.0]])
    rho = mmos.density(sphere, c, MmosParams(alpha=3.0))
    assert rho[e] < 0.01
    lo, hi = mesh.bounds()
    far = np.tile(np.concatenate([hi + 25, hi + 25, [3.0]]), (5, 1))
    assert np.all(mmos.density(far, c) > 0.99)


def test_log_space_matches_direct_product(rng):
    masks, pts = random_mask_instance(rng, n_masks=80, n_points=50)
    masks[:, 6] = 0.1
    p = MmosParams()
    direct = np.prod([mmos.mask_value(m, pts, p) for m in masks], axis=0)
    assert np.allclose(mmos.density(masks, pts, p), direct, rtol=1e-12, atol=1e-300)


def test_density_is_chunk_invariant(rng):
    masks, pts = random_mask_instance(rng, n_points=500)
    assert np.array_equal(mmos.density(masks, pts, chunk=64), mmos.density(masks, pts))


def test_radius_derivative_exact(rng):
    masks, pts = random_mask_instance(rng, n_masks=1)
    p = MmosParams()
    rho = mmos.density(masks, pts, p)
    w = rng.normal(size=pts.shape[0])
    g = mmos.density_jacobian_product(masks, pts, p, w)
    h = mmos.mask_value(masks[0], pts, p)
    # d phi / d d = -1
    assert g[0, 6] == pytest.approx(np.sum(w * p.alpha * rho * (1 - h) * -1.0), rel=1e-12)


def test_coincident_foci_gradient_finite():
    masks = np.array([[0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 2.0]])
    pts = np.array([[0.5, 0.5, 0.5], [1.0, 0.0, 0.0]])
    g = mmos.density_jacobian_product(masks, pts, MmosParams(), np.ones(2))
    assert np.all(np.isfinite(g))


def test_gradient_matches_high_precision_differences():
    rng = np.random.default_rng(7)
    p = MmosParams(epsilon=1e-14)
    worst = 0.0
    for _ in range(20):
        masks, pts = random_mask_instance(rng, n_masks=3, n_points=30)
        w = rng.normal(size=pts.shape[0])
        g = mmos.density_jacobian_product(masks, pts, p, w)
        worst = max(worst, max_rel_error(g, weighted_density_gradient(masks, pts, w)))
    assert worst < 1e-5


@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=10, deadline=None)
def test_gradient_property(seed):
    rng = np.random.default_rng(seed)
    masks, pts = random_mask_instance(rng, n_masks=2, n_points=15)
    w = rng.normal(size=15)
    g = mmos.density_jacobian_product(masks, pts, MmosParams(epsilon=1e-14), w)
    assert max_rel_error(g, weighted_density_gradient(masks, pts, w)) < 1e-5


def test_float_check_helper_is_accurate_on_large_components():
    assert check_density_gradients(5, seed=3) < 1e-4


def test_masks_round_trip(tmp_path, rng):
    masks, _ = random_mask_instance(rng)
    mmos.write_masks(tmp_path / "m.txt", masks)
    assert np.array_equal(mmos.read_masks(tmp_path / "m.txt"), masks)


def test_params_validation():
    with pytest.raises(ValueError):
        MmosParams(alpha=0)
    with pytest.raises(ValueError):
        MmosParams(rho_min=1.0)
    with pytest.raises(ValueError):
        mmos.as_masks(np.zeros((2, 6)))
