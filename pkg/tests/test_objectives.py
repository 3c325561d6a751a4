import math

import numpy as np
import pytest

from sgdchain.core import gradient_check
from sgdchain.errors import NotFoundError
from sgdchain.noise import RngStream, gen_regression_data
from sgdchain.objectives import (
    BlakeZissermanMLE,
    CauchyRegMLE,
    QuadSine,
    Quadratic,
    SimplifiedBZ,
    SimplifiedCauchy,
    canonical_name,
    hessian_negativity_witness,
    make_objective,
    radial_curvature,
)


@pytest.fixture(scope="module")
def dataset():
    return gen_regression_data(200, 5, 10, RngStream(7, 0))


def _ball(rng, n, d, radius=5.0):
    z = rng.normal(size=(n, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return z * radius * rng.uniform(size=(n, 1)) ** (1.0 / d)


def _all_objectives(ds):
    return [
        Quadratic(3, center=[1.0, -2.0, 0.5]),
        QuadSine(),
        SimplifiedCauchy(4, 0.1),
        SimplifiedBZ(4, 0.1, 1.0),
        CauchyRegMLE(ds.X, ds.y, 0.1),
        BlakeZissermanMLE(ds.X, ds.y, 0.1, 1.0),
    ]


def test_gradients_match_finite_differences(dataset):
    rng = np.random.default_rng(0)
    for obj in _all_objectives(dataset):
        pts = _ball(rng, 100, obj.dim)
        assert gradient_check(obj, pts).max() <= 1e-5, obj.name


def test_hessians_match_gradient_differences(dataset):
    rng = np.random.default_rng(1)
    for obj in _all_objectives(dataset):
        for theta in _ball(rng, 5, obj.dim):
            h = 1e-6
            num = np.stack([(obj.grad(theta + h * e) - obj.grad(theta - h * e)) / (2 * h)
                            for e in np.eye(obj.dim)])
            np.testing.assert_allclose(obj.hessian(theta), num, atol=1e-6, err_msg=obj.name)


def test_known_minimizers_are_critical():
    for obj in (Quadratic(2, [1.0, 3.0]), QuadSine(), SimplifiedCauchy(3), SimplifiedBZ(3)):
        assert np.linalg.norm(obj.grad(obj.known_min)) <= 1e-8


def test_make_objective_examples():
    np.testing.assert_array_equal(make_objective("simplified-cauchy", dim=2).grad(np.zeros(2)), 0.0)
    bz = make_objective("simplified-bz", dim=3, lam=0.1, nu=1.0)
    theta = np.array([0.6, 0.0, 0.8])
    np.testing.assert_allclose(bz.grad(theta), (1 / (1 + math.e) + 0.1) * theta, rtol=1e-12)
    # hand value of 1/(1+e) + 0.1
    assert bz.grad(theta)[0] / 0.6 == pytest.approx(0.36894, abs=1e-5)
    c = make_objective("quadsine").constants
    assert (c.alpha, c.beta) == (1.0, 25.0)


def test_make_objective_errors(dataset):
    with pytest.raises(ValueError):
        make_objective("rosenbrock")
    with pytest.raises(ValueError):
        make_objective("simplified-cauchy", lam=0.0)
    with pytest.raises(ValueError):
        make_objective("simplified-bz", nu=-1.0)
    with pytest.raises(ValueError):
        CauchyRegMLE(dataset.X, dataset.y[:-1])
    with pytest.raises(ValueError):
        make_objective("cauchy-reg-mle")
    assert canonical_name("BZ") == "bz-mle"


def test_regression_declared_constants(dataset):
    lam = 0.1
    xty = dataset.X.T @ dataset.y / dataset.m
    c = CauchyRegMLE(dataset.X, dataset.y, lam).constants
    assert c.alpha == pytest.approx(lam / 4)
    assert c.beta == pytest.approx(xty @ xty / lam)
    c = BlakeZissermanMLE(dataset.X, dataset.y, lam, 1.0).constants
    assert c.alpha == pytest.approx(lam / 2)
    assert c.beta == pytest.approx(xty @ xty / (2 * lam * 4))


def test_cauchy_gradient_growth_bound(dataset):
    obj = CauchyRegMLE(dataset.X, dataset.y, 0.1)
    rng = np.random.default_rng(2)
    pts = rng.normal(size=(1000, obj.dim)) * rng.uniform(0, 20, size=(1000, 1))
    lam_max = np.linalg.eigvalsh(dataset.X.T @ dataset.X / dataset.m).max()
    xty = np.linalg.norm(dataset.X.T @ dataset.y / dataset.m)
    lhs = np.linalg.norm(obj.grad(pts), axis=1)
    assert np.all(lhs <= (lam_max + 0.1) * np.linalg.norm(pts, axis=1) + xty)


def test_simplified_cauchy_gradient_domination():
    lam = 0.1
    obj = SimplifiedCauchy(5, lam)
    rng = np.random.default_rng(4)
    pts = rng.normal(size=(1000, 5)) * rng.uniform(0, 10, size=(1000, 1))
    g = obj.grad(pts)
    gap = obj.value(pts) - obj.value(np.zeros(5))
    assert np.all(np.einsum("ij,ij->i", g, g) >= 2 * lam**2 / (1 + lam) * gap - 1e-12)


def test_simplified_bz_tail_dissipativity():
    lam = 0.1
    obj = SimplifiedBZ(5, lam, 1.0)
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(1000, 5)) * rng.uniform(0, 10, size=(1000, 1))
    lhs = np.einsum("ij,ij->i", obj.grad(pts), pts)
    assert np.all(lhs >= lam * np.einsum("ij,ij->i", pts, pts) - 1e-12)


def test_bz_weight_is_stable_for_large_residuals():
    obj = SimplifiedBZ(2, 0.1, 1.0)
    g = obj.grad(np.array([100.0, 0.0]))
    assert np.all(np.isfinite(g))
    assert g[0] == pytest.approx(10.0)


def test_minibatch_full_batch_equals_gradient(dataset):
    obj = CauchyRegMLE(dataset.X, dataset.y, 0.1)
    theta = np.linspace(-1, 1, obj.dim)
    idx = np.arange(obj.m)[None, :]
    np.testing.assert_allclose(obj.minibatch_grad(theta[None, :], idx)[0], obj.grad(theta),
                               atol=1e-12)


def test_negativity_witness_simplified_cauchy():
    obj = SimplifiedCauchy(10, 0.1)
    w = hessian_negativity_witness(obj)
    assert w.value < 0
    assert 1.5 <= np.linalg.norm(w.theta) <= 2.0 + 1e-9
    band = np.round(np.arange(150, 201) * 0.01, 10)
    assert np.all(radial_curvature(obj, band) < 0)


def test_negativity_witness_simplified_bz():
    obj = SimplifiedBZ(10, 0.1, 1.0)
    w = hessian_negativity_witness(obj)
    assert w.value < 0
    assert 1.0 <= np.linalg.norm(w.theta) ** 2 <= 2.0
    band = np.sqrt(np.linspace(1.0, 2.0, 51))
    assert np.all(radial_curvature(obj, band) < 0)


def test_negativity_witness_quadratic_not_found():
    with pytest.raises(NotFoundError):
        hessian_negativity_witness(Quadratic(3))
