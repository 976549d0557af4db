import numpy as np
import pytest

from hdrm.common.errors import ConfigError, ShapeError
from hdrm.model.optimizer import OptimizerState, adam_step


def test_zero_gradient_leaves_params():
    params = [np.array([1.0, -2.0]), np.ones((2, 2))]
    before = [p.copy() for p in params]
    state = OptimizerState.for_params(params, lr=0.1)
    adam_step(params, [np.zeros(2), np.zeros((2, 2))], state)
    for p, b in zip(params, before):
        np.testing.assert_array_equal(p, b)
    assert state.step == 1


def test_first_step_moves_against_gradient_sign():
    params = [np.zeros(3)]
    state = OptimizerState.for_params(params, lr=0.01)
    adam_step(params, [np.array([2.0, -0.5, 1e-3])], state)
    np.testing.assert_allclose(params[0], [-0.01, 0.01, -0.01], rtol=1e-4)


def test_weight_decay_shrinks_params():
    params = [np.array([1.0])]
    state = OptimizerState.for_params(params, lr=0.1, weight_decay=0.5)
    adam_step(params, [np.zeros(1)], state)
    assert params[0][0] == pytest.approx(0.95)


def test_non_finite_gradient_skips_step():
    params = [np.array([1.0, 2.0])]
    state = OptimizerState.for_params(params, lr=0.1)
    adam_step(params, [np.array([np.nan, 1.0])], state)
    np.testing.assert_array_equal(params[0], [1.0, 2.0])
    assert state.step == 0
    assert state.skipped == 1
    np.testing.assert_array_equal(state.m[0], 0.0)


def test_shape_mismatch_raises():
    params = [np.zeros(3)]
    state = OptimizerState.for_params(params)
    with pytest.raises(ShapeError):
        adam_step(params, [np.zeros(2)], state)
    with pytest.raises(ShapeError):
        adam_step(params, [np.zeros(3), np.zeros(3)], state)


def test_lazy_moment_init():
    params = [np.zeros((2, 3))]
    state = OptimizerState(lr=0.1)
    adam_step(params, [np.ones((2, 3))], state)
    assert state.m[0].shape == (2, 3)


@pytest.mark.parametrize("kwargs", [{"lr": 0.0}, {"beta1": 1.0}, {"weight_decay": -1.0}])
def test_rejects_bad_hyperparameters(kwargs):
    with pytest.raises(ConfigError):
        OptimizerState(**kwargs)


def test_state_survives_checkpoint_arrays():
    params = [np.zeros(2), np.zeros((2, 2))]
    state = OptimizerState.for_params(params, lr=0.05, weight_decay=0.01)
    adam_step(params, [np.ones(2), np.ones((2, 2))], state)
    restored = OptimizerState.from_arrays(state.to_arrays("opt"), "opt")
    assert restored.step == 1
    assert restored.lr == pytest.approx(0.05)
    assert restored.weight_decay == pytest.approx(0.01)
    assert len(restored.m) == 2
    np.testing.assert_array_equal(restored.v[1], state.v[1])


def test_converges_on_quadratic():
    params = [np.array([3.0, -4.0])]
    state = OptimizerState.for_params(params, lr=0.1)
    for _ in range(500):
        adam_step(params, [2.0 * params[0]], state)
    np.testing.assert_allclose(params[0], 0.0, atol=1e-2)
