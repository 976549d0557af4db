import math

import numpy as np
import pytest

from hdrm.common.errors import ConfigError, ShapeError
from hdrm.geometry import ManifoldConfig, make_manifold
from hdrm.model.objective import (
    EuclideanChartDistance,
    LorentzOriginDistance,
    LossConfig,
    OriginDistance,
    PoincareOriginDistance,
    fermi_dirac,
    fermi_dirac_score,
    joint_recon_loss,
    loss_backward,
    margin_loss,
    ranking_loss_and_grads,
    recon_loss,
    reweight,
    total_loss,
)


@pytest.fixture(params=["euclidean", "lorentz", "poincare"])
def kernel(request) -> OriginDistance:
    if request.param == "euclidean":
        return OriginDistance.for_manifold(None)
    return OriginDistance.for_manifold(make_manifold(ManifoldConfig(request.param, -1.0, 3)))


def numeric_grad(f, x, h=1e-6):
    grad = np.zeros_like(x)
    for index in np.ndindex(x.shape):
        up = x.copy()
        down = x.copy()
        up[index] += h
        down[index] -= h
        grad[index] = (f(up) - f(down)) / (2 * h)
    return grad


class TestLossConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [{"margin": -0.1}, {"alpha": 1.5}, {"gamma": -1.0}, {"fermi_t": 0.0}],
    )
    def test_rejects_out_of_range(self, kwargs):
        with pytest.raises(ConfigError):
            LossConfig(**kwargs)

    def test_defaults(self):
        config = LossConfig()
        assert config.fermi_q == 2.0
        assert config.fermi_t == 1.0


def test_fermi_dirac_reference_values():
    config = LossConfig(fermi_q=2.0, fermi_t=1.0)
    assert fermi_dirac(2.0, config) == pytest.approx(0.5)
    assert fermi_dirac(2.0 + math.log(3.0), config) == pytest.approx(0.25)
    assert fermi_dirac(0.0, config) == pytest.approx(1.0 / (math.exp(-2.0) + 1.0))


def test_fermi_dirac_score_identical_points(manifold):
    point = manifold.exp_origin(np.array([0.2, -0.1, 0.3]))
    config = LossConfig()
    assert fermi_dirac_score(point, point, config, manifold) == pytest.approx(
        1.0 / (math.exp(-2.0) + 1.0), abs=1e-6
    )


def test_fermi_dirac_decreases_with_distance(manifold):
    config = LossConfig()
    near = manifold.exp_origin(np.array([0.1, 0.0, 0.0]))
    far = manifold.exp_origin(np.array([2.0, 0.0, 0.0]))
    o = manifold.origin()
    assert fermi_dirac_score(o, near, config, manifold) > fermi_dirac_score(o, far, config, manifold)


def test_margin_loss():
    np.testing.assert_allclose(
        margin_loss(np.array([0.9, 0.5, 0.3]), np.array([0.1, 0.5, 0.6]), 0.2),
        [0.0, 0.2, 0.5],
    )


def test_recon_loss_example():
    assert recon_loss(np.array([[1.0, 1.0]]), np.zeros((1, 2)))[0] == pytest.approx(2.0)
    with pytest.raises(ShapeError):
        recon_loss(np.zeros((2, 3)), np.zeros((2, 2)))


def test_joint_recon_loss_averages():
    user = np.array([[1.0, 1.0]])
    item = np.array([[2.0, 0.0]])
    zeros = np.zeros((1, 2))
    assert joint_recon_loss(user, zeros, item, zeros)[0] == pytest.approx(3.0)


def test_total_loss_mixes_terms():
    assert total_loss(1.0, 2.0, 0.3) == pytest.approx(0.3 + 1.4)
    assert total_loss(1.0, 2.0, 1.0) == pytest.approx(1.0)
    assert total_loss(1.0, 2.0, 0.0) == pytest.approx(2.0)


def test_reweight():
    s = np.array([0.0, 0.5, 1.0])
    np.testing.assert_array_equal(reweight(s, 0.0), 1.0)
    np.testing.assert_allclose(reweight(s, 1.0), 1.0 / (1.0 + np.exp(-s)))
    assert np.all(np.diff(reweight(s, 0.4)) > 0)


def test_kernel_selection():
    assert isinstance(OriginDistance.for_manifold(None), EuclideanChartDistance)
    lorentz = make_manifold(ManifoldConfig("lorentz", -1.0, 2))
    ball = make_manifold(ManifoldConfig("poincare", -1.0, 2))
    assert isinstance(OriginDistance.for_manifold(lorentz), LorentzOriginDistance)
    assert isinstance(OriginDistance.for_manifold(ball), PoincareOriginDistance)


def test_kernel_matches_manifold_distance(manifold):
    rng = np.random.default_rng(0)
    a = rng.normal(scale=0.5, size=(10, 3))
    b = rng.normal(scale=0.5, size=(10, 3))
    kernel = OriginDistance.for_manifold(manifold)
    expected = manifold.dist(manifold.exp_origin(a), manifold.exp_origin(b)) ** 2
    np.testing.assert_allclose(kernel.sq_dist(a, b), expected, atol=1e-8)
    pairwise = kernel.pairwise_sq_dist(a, b)
    np.testing.assert_allclose(np.diag(pairwise), expected, atol=1e-8)


def test_sq_dist_grad_matches_finite_differences(kernel):
    rng = np.random.default_rng(1)
    a = rng.normal(scale=0.5, size=(1, 3))
    b = rng.normal(scale=0.5, size=(1, 3))
    grad_a, grad_b = kernel.sq_dist_grad(a, b)
    np.testing.assert_allclose(grad_a, numeric_grad(lambda x: kernel.sq_dist(x, b)[0], a), rtol=1e-5, atol=1e-7)
    np.testing.assert_allclose(grad_b, numeric_grad(lambda x: kernel.sq_dist(a, x)[0], b), rtol=1e-5, atol=1e-7)


def test_ranking_grads_match_finite_differences(kernel):
    rng = np.random.default_rng(2)
    user, pos, neg = (rng.normal(scale=0.5, size=(4, 3)) for _ in range(3))
    # every triplet stays on the active side of the hinge
    config = LossConfig(margin=1.0)
    weights = rng.uniform(0.5, 1.0, size=4)
    grads = ranking_loss_and_grads(kernel, user, pos, neg, config, weights=weights, scale=0.7)
    assert grads.active.all()

    def loss(u, p, n):
        return ranking_loss_and_grads(kernel, u, p, n, config, weights=weights, scale=0.7).loss

    np.testing.assert_allclose(grads.grad_user, numeric_grad(lambda x: loss(x, pos, neg), user), rtol=1e-5, atol=1e-8)
    np.testing.assert_allclose(grads.grad_pos, numeric_grad(lambda x: loss(user, x, neg), pos), rtol=1e-5, atol=1e-8)
    np.testing.assert_allclose(grads.grad_neg, numeric_grad(lambda x: loss(user, pos, x), neg), rtol=1e-5, atol=1e-8)


def test_inactive_triplets_have_no_gradient():
    kernel = EuclideanChartDistance()
    user = np.zeros((1, 2))
    pos = np.zeros((1, 2))
    neg = np.array([[5.0, 0.0]])
    grads = ranking_loss_and_grads(kernel, user, pos, neg, LossConfig(margin=0.1))
    assert grads.loss == 0.0
    assert not grads.active.any()
    np.testing.assert_array_equal(grads.grad_user, 0.0)
    np.testing.assert_array_equal(grads.grad_neg, 0.0)


def test_loss_backward_uses_positive_score_weights():
    kernel = EuclideanChartDistance()
    rng = np.random.default_rng(3)
    user, pos, neg = (rng.normal(scale=0.3, size=(5, 2)) for _ in range(3))
    config = LossConfig(margin=1.0, gamma=0.4)
    plain = ranking_loss_and_grads(kernel, user, pos, neg, config)
    weighted = loss_backward(kernel, user, pos, neg, config)
    expected = np.mean(reweight(plain.s_pos, 0.4) * plain.per_triplet)
    assert weighted.loss == pytest.approx(expected)
    assert weighted.loss < plain.loss
