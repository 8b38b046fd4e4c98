import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mongelmc import targets as tg
from mongelmc.errors import NonPositiveDefinite, OriginSingularity

from conftest import TARGET_NAMES, make_targets, random_point, random_spd


@pytest.mark.parametrize("name", TARGET_NAMES)
def test_gradient_matches_finite_differences(name):
    target = make_targets()[name]
    rng = np.random.default_rng(7)
    for _ in range(100):
        x = random_point(name, target, rng)
        fd_grad, _ = tg.finite_difference_derivatives(target, x)
        grad = target.gradient(x)
        scale = max(1.0, np.abs(grad).max())
        np.testing.assert_allclose(grad, fd_grad, rtol=1e-5, atol=1e-5 * scale)


@pytest.mark.parametrize("name", TARGET_NAMES)
def test_hessian_matches_finite_differences_of_gradient(name):
    target = make_targets()[name]
    rng = np.random.default_rng(8)
    for _ in range(100):
        x = random_point(name, target, rng)
        fd_hess = tg.finite_difference_hessian_from_gradient(target, x)
        hess = target.hessian(x)
        scale = max(1.0, np.abs(hess).max())
        np.testing.assert_allclose(hess, fd_hess, rtol=1e-4, atol=1e-4 * scale)


@pytest.mark.parametrize("name", TARGET_NAMES)
def test_hessian_from_log_density_stencil(name):
    # coarser check of the four-point stencil against the analytic Hessian
    target = make_targets()[name]
    rng = np.random.default_rng(9)
    for _ in range(10):
        x = random_point(name, target, rng)
        _, fd_hess = tg.finite_difference_derivatives(target, x, h=1e-4)
        hess = target.hessian(x)
        scale = max(1.0, np.abs(hess).max(), abs(target.log_density(x)))
        np.testing.assert_allclose(hess, fd_hess, rtol=1e-3, atol=1e-3 * scale)


def test_standard_normal_values():
    t = tg.gaussian_target([0.0], [[1.0]])
    assert t.log_density([2.0]) == pytest.approx(-0.5 * math.log(2 * math.pi) - 2.0, abs=1e-14)
    assert t.gradient([2.0]) == pytest.approx([-2.0])
    np.testing.assert_array_equal(t.hessian([2.0]), [[-1.0]])


def test_gaussian_diagonal_covariance():
    t = tg.gaussian_target([0.0], [[4.0]])
    assert t.gradient([2.0]) == pytest.approx([-0.5])


@pytest.mark.parametrize("cov", [[[1.0, 2.0], [2.0, 1.0]], [[1.0, 0.5], [0.4, 1.0]], [[-1.0]]])
def test_gaussian_rejects_bad_covariance(cov):
    with pytest.raises(NonPositiveDefinite):
        tg.gaussian_target(np.zeros(len(cov)), cov)


def test_gaussian_random_spd_finite_differences():
    rng = np.random.default_rng(3)
    t = tg.gaussian_target(rng.standard_normal(3), random_spd(rng, 3))
    for _ in range(20):
        x = rng.standard_normal(3)
        g, _ = tg.finite_difference_derivatives(t, x)
        np.testing.assert_allclose(t.gradient(x), g, atol=1e-6)


def test_funnel_at_origin():
    t = tg.funnel_target(1, 0.0, 15.0)
    ell = t.log_density([0.0, 0.0])
    x_part = -0.5 * math.log(2 * math.pi * math.log(2.0))
    a_part = -0.5 * math.log(2 * math.pi * 15.0)
    assert ell == pytest.approx(x_part + a_part, abs=1e-14)
    g, _ = tg.finite_difference_derivatives(t, np.zeros(2))
    np.testing.assert_allclose(t.gradient([0.0, 0.0]), g, atol=1e-6)


def test_funnel_marginal_is_the_prior_on_a():
    # integrate exp(ell) over x for a few a values; should equal N(a | 0, 15)
    t = tg.funnel_target(1, 0.0, 15.0)
    for a in (-3.0, 0.0, 2.5):
        s = math.log1p(math.exp(a))
        xs = np.linspace(-12 * math.sqrt(s), 12 * math.sqrt(s), 4001)
        dens = np.exp([t.log_density([x, a]) for x in xs])
        integral = np.trapezoid(dens, xs)
        assert math.log(integral) == pytest.approx(float(t.marginal_log_pdf(a)), abs=1e-8)


def test_funnel_stable_for_extreme_a():
    t = tg.funnel_target(1, 0.0, 15.0)
    ell, g, h = t.evaluate(np.array([0.0, -300.0]))
    assert np.isfinite(ell) and np.isfinite(g).all() and np.isfinite(h).all()
    ell, g, h = t.evaluate(np.array([1.0, 500.0]))
    assert np.isfinite(ell) and np.isfinite(g).all() and np.isfinite(h).all()


def test_banana_stationary_point_with_zero_data():
    t = tg.banana_target(np.zeros(10), 0.5, 0.5)
    np.testing.assert_array_equal(t.gradient([0.0, 0.0]), [0.0, 0.0])


def test_banana_random_data_finite_differences():
    rng = np.random.default_rng(5)
    t = tg.banana_target(rng.normal(1, 1, 7), 0.3, 0.8)
    for _ in range(20):
        x = rng.standard_normal(2)
        g, _ = tg.finite_difference_derivatives(t, x)
        np.testing.assert_allclose(t.gradient(x), g, rtol=1e-6, atol=1e-6)


def test_banana_default_configuration():
    t = tg.banana_target()
    assert t.sigma2_y == 0.5 and t.sigma2 == 0.5 and t.y_data.shape == (10,)


def test_ring_gradient_on_ridge():
    t = tg.ring_target(12.0, 0.12)
    np.testing.assert_allclose(t.gradient([12.0, 0.0]), [-1.0 / 12.0, 0.0], atol=1e-15)
    g, _ = tg.finite_difference_derivatives(t, np.array([12.0, 0.0]))
    np.testing.assert_allclose(g, [-1.0 / 12.0, 0.0], atol=1e-8)


def test_ring_origin_raises():
    with pytest.raises(OriginSingularity):
        tg.ring_target().log_density([0.0, 0.0])


@settings(max_examples=100, deadline=None)
@given(r=st.floats(0.5, 30.0), th=st.floats(0.0, 2 * math.pi), rot=st.floats(0.0, 2 * math.pi))
def test_ring_rotation_invariant(r, th, rot):
    t = tg.ring_target(12.0, 0.12)
    x = np.array([r * math.cos(th), r * math.sin(th)])
    c, s = math.cos(rot), math.sin(rot)
    rx = np.array([[c, -s], [s, c]]) @ x
    assert t.log_density(rx) == pytest.approx(t.log_density(x), abs=1e-12)


def test_squiggle_with_zero_warp_is_gaussian():
    cov = tg.SQUIGGLE_COVARIANCE
    sq = tg.squiggle_target(0.0, cov)
    gs = tg.gaussian_target([0.0, 0.0], cov)
    rng = np.random.default_rng(2)
    for _ in range(50):
        x = rng.normal(0, 2, 2)
        a, b = sq.evaluate(x), gs.evaluate(x)
        assert a[0] == pytest.approx(b[0], abs=1e-12)
        np.testing.assert_allclose(a[1], b[1], rtol=0, atol=1e-12 * max(1, np.abs(b[1]).max()))
        np.testing.assert_allclose(a[2], b[2], rtol=1e-12)


@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
def test_squiggle_frequency_settings(a):
    t = tg.squiggle_target(a)
    rng = np.random.default_rng(int(a * 10))
    for _ in range(20):
        x = np.array([rng.normal(0, 3), rng.normal(0, 1)])
        g = tg.finite_difference_hessian_from_gradient(t, x)
        np.testing.assert_allclose(t.hessian(x), g, rtol=1e-4, atol=1e-4 * np.abs(g).max())


def test_logistic_gradient_at_zero():
    rng = np.random.default_rng(4)
    feats = rng.standard_normal((40, 2))
    feats -= feats.mean(axis=0)
    X = np.column_stack([np.ones(40), feats])
    y = np.array([0.0, 1.0] * 20)
    t = tg.logistic_regression_target(tg.ClassificationDataset(X, y))
    np.testing.assert_allclose(t.gradient(np.zeros(3)), X.T @ (y - 0.5), atol=1e-12)
    assert t.prior_var == 100.0


def test_logistic_hessian_negative_definite():
    data = tg.synthetic_classification(50, 3, seed=1)
    t = tg.logistic_regression_target(data)
    rng = np.random.default_rng(1)
    for _ in range(50):
        theta = rng.normal(0, 5, 3)
        assert np.linalg.eigvalsh(t.hessian(theta)).max() < 0
        g, _ = tg.finite_difference_derivatives(t, theta)
        np.testing.assert_allclose(t.gradient(theta), g, rtol=1e-5, atol=1e-5)


def test_logistic_large_linear_predictor_is_finite():
    X = np.array([[1.0, 1000.0], [1.0, -1000.0]])
    t = tg.logistic_regression_target(tg.ClassificationDataset(X, [1.0, 0.0]))
    ell, g, h = t.evaluate(np.array([0.0, 5.0]))
    assert np.isfinite(ell) and np.isfinite(g).all() and np.isfinite(h).all()


def test_finite_differences_exact_on_quadratic():
    t = tg.gaussian_target(np.zeros(3), np.eye(3))
    rng = np.random.default_rng(0)
    for _ in range(10):
        x = rng.standard_normal(3)
        g, h = tg.finite_difference_derivatives(t, x, h=1e-5)
        np.testing.assert_allclose(g, -x, atol=1e-8)
        # second differences lose ~eps*|f|/h^2 to round-off
        np.testing.assert_allclose(h, -np.eye(3), atol=1e-4)
    _, h0 = tg.finite_difference_derivatives(t, np.zeros(3), h=1e-5)
    np.testing.assert_allclose(h0, -np.eye(3), atol=1e-8)


def test_dataset_loader(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("f1,f2,y\n0.5,1.0,1\n-0.5,2.0,0\n1.5,-1.0,1\n")
    ds = tg.ClassificationDataset.from_file(path, header=True)
    np.testing.assert_array_equal(ds.features[:, 0], 1.0)
    assert ds.features.shape == (3, 3)
    np.testing.assert_array_equal(ds.labels, [1, 0, 1])
    ds2 = tg.ClassificationDataset.from_file(path, header=True, intercept=False)
    assert ds2.features.shape == (3, 2)


def test_dataset_rejects_non_binary_labels():
    with pytest.raises(ValueError, match="labels"):
        tg.ClassificationDataset(np.ones((2, 2)), [0.0, 2.0])
