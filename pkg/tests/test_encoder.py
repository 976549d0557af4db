import numpy as np
import pytest
import scipy.sparse as sp

from hdrm.common.errors import ConfigError, ShapeError
from hdrm.model.encoder import (
    EmbeddingTable,
    EncoderConfig,
    GraphPropagation,
    aggregate,
    encode,
    encode_backward,
    init_embeddings,
)


@pytest.fixture
def propagation(tiny_dataset):
    return GraphPropagation.from_dataset(tiny_dataset)


def test_operator_is_identity_plus_mean():
    # user 0 -> items 0, 1; user 1 has no train items
    matrix = sp.csr_matrix(np.array([[1.0, 1.0], [0.0, 0.0]]))
    dense = GraphPropagation(matrix).dense()
    expected = np.array(
        [
            [1.0, 0.0, 0.5, 0.5],
            [0.0, 1.0, 0.0, 0.0],
            [1.0, 0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0, 1.0],
        ]
    )
    np.testing.assert_allclose(dense, expected)


def test_aggregate_checks_row_count(propagation):
    with pytest.raises(ShapeError):
        aggregate(np.zeros((3, 2)), propagation)


def test_pool_sums_powers(propagation):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(propagation.num_nodes, 3))
    p = propagation.dense()
    expected = x + p @ x + p @ p @ x
    np.testing.assert_allclose(propagation.pool(x, 2), expected)
    np.testing.assert_allclose(propagation.pool(x, 0), x)


def test_encode_euclidean_chart(tiny_dataset, propagation):
    config = EncoderConfig(layers=2, dim=3)
    table = init_embeddings(config, tiny_dataset.num_users, tiny_dataset.num_items, seed=0)
    out = encode(table, propagation, config, None)
    np.testing.assert_array_equal(out.e_user, out.z_user)
    np.testing.assert_array_equal(out.e_item, out.z_item)
    assert out.manifold is None


def test_encode_lands_on_manifold(tiny_dataset, propagation, manifold):
    config = EncoderConfig(layers=3, dim=3)
    table = init_embeddings(config, tiny_dataset.num_users, tiny_dataset.num_items, seed=1)
    out = encode(table, propagation, config, manifold)
    manifold.check_point(out.e_user)
    manifold.check_point(out.e_item)
    assert out.e_user.shape == (3, manifold.config.ambient_dim)
    assert out.z_user.shape == (3, 3)


def test_encode_backward_is_transposed_operator(tiny_dataset, propagation):
    config = EncoderConfig(layers=2, dim=3)
    rng = np.random.default_rng(2)
    table = init_embeddings(config, tiny_dataset.num_users, tiny_dataset.num_items, seed=2)
    w_user = rng.normal(size=(3, 3))
    w_item = rng.normal(size=(5, 3))

    def objective(user_params, item_params):
        out = encode(EmbeddingTable(user_params, item_params), propagation, config, None)
        return float(np.sum(w_user * out.z_user) + np.sum(w_item * out.z_item))

    grad_user, grad_item = encode_backward(w_user, w_item, propagation, config)
    h = 1e-6
    for index in np.ndindex(table.user_params.shape):
        up, down = table.user_params.copy(), table.user_params.copy()
        up[index] += h
        down[index] -= h
        numeric = (objective(up, table.item_params) - objective(down, table.item_params)) / (2 * h)
        assert grad_user[index] == pytest.approx(numeric, rel=1e-5, abs=1e-7)
    for index in np.ndindex(table.item_params.shape):
        up, down = table.item_params.copy(), table.item_params.copy()
        up[index] += h
        down[index] -= h
        numeric = (objective(table.user_params, up) - objective(table.user_params, down)) / (2 * h)
        assert grad_item[index] == pytest.approx(numeric, rel=1e-5, abs=1e-7)


def test_encode_backward_shape_checks(propagation):
    config = EncoderConfig(layers=1, dim=2)
    with pytest.raises(ShapeError):
        encode_backward(np.zeros((2, 2)), np.zeros((5, 2)), propagation, config)


def test_encode_rejects_mismatched_table(propagation):
    config = EncoderConfig(layers=1, dim=2)
    with pytest.raises(ShapeError):
        encode(init_embeddings(config, 4, 5, seed=0), propagation, config, None)


def test_config_validation():
    with pytest.raises(ConfigError):
        EncoderConfig(layers=-1)
    with pytest.raises(ConfigError):
        EncoderConfig(dim=0)


def test_table_arrays_and_copy():
    table = EmbeddingTable(np.ones((2, 3)), np.zeros((4, 3)), init_std=0.2)
    clone = table.copy()
    clone.user_params[0, 0] = 5.0
    assert table.user_params[0, 0] == 1.0
    restored = EmbeddingTable.from_arrays(table.to_arrays("t"), "t")
    assert restored.init_std == pytest.approx(0.2)
    assert restored.dim == 3
    assert restored.is_finite()
    with pytest.raises(ShapeError):
        EmbeddingTable(np.ones((2, 3)), np.ones((2, 4)))
