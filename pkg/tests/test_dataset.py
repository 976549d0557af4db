import numpy as np
import pytest

from hdrm.common.errors import DataError, EmptyDatasetError, NoiseInjectionError
from hdrm.data.dataset import (
    InteractionDataset,
    PositivePairs,
    SplitSpec,
    binarize,
    inject_noise,
    sample_negative,
    sample_negatives,
    split,
)
from hdrm.data.interaction_parser import load_interactions
from tests.conftest import planted_pairs


class TestSplitSpec:
    @pytest.mark.parametrize(
        "n, expected", [(10, (7, 1, 2)), (4, (2, 1, 1)), (3, (1, 1, 1)), (20, (14, 2, 4))]
    )
    def test_counts(self, n, expected):
        assert SplitSpec().counts(n) == expected

    def test_rejects_bad_ratios(self):
        with pytest.raises(DataError):
            SplitSpec(ratios=(0.5, 0.2, 0.2))
        with pytest.raises(DataError):
            SplitSpec(ratios=(1.0, 0.0, 0.0))


def test_split_drops_sparse_users_and_redensifies():
    pairs = np.array(
        [[0, 0], [0, 1], [0, 2], [1, 0], [1, 3], [2, 0], [2, 1], [2, 2], [2, 3]]
    )
    dataset = split(PositivePairs(pairs, np.empty((0, 2), dtype=np.int64), 3, 4), SplitSpec(seed=1))
    assert dataset.num_users == 2
    assert dataset.user_index.tolist() == [0, 2]
    assert len(dataset.train) + len(dataset.val) + len(dataset.test) == 7
    # user with 4 positives splits 2/1/1, user with 3 splits 1/1/1
    assert np.bincount(dataset.train[:, 0]).tolist() == [1, 2]
    assert np.bincount(dataset.val[:, 0]).tolist() == [1, 1]
    assert np.bincount(dataset.test[:, 0]).tolist() == [1, 1]


def test_split_is_disjoint_and_reproducible(planted_dataset):
    codes = [
        set(map(tuple, getattr(planted_dataset, name).tolist())) for name in ("train", "val", "test")
    ]
    assert not codes[0] & codes[1]
    assert not codes[0] & codes[2]
    assert not codes[1] & codes[2]
    again = split(planted_pairs(), SplitSpec(seed=0))
    np.testing.assert_array_equal(again.train, planted_dataset.train)


def test_split_without_users_raises():
    pairs = np.array([[0, 0], [0, 1]])
    with pytest.raises(EmptyDatasetError):
        split(PositivePairs(pairs, np.empty((0, 2), dtype=np.int64), 1, 2), SplitSpec())


def test_dataset_rejects_ids_outside_space():
    with pytest.raises(DataError):
        InteractionDataset(2, 2, np.array([[0, 5]]), np.empty((0, 2)), np.empty((0, 2)))


def test_adjacency_views(tiny_dataset):
    assert tiny_dataset.user_degree.tolist() == [2, 2, 2]
    assert tiny_dataset.item_degree.tolist() == [1, 2, 1, 1, 1]
    assert tiny_dataset.user_neighbors(1).tolist() == [1, 2]
    assert tiny_dataset.item_neighbors(1).tolist() == [0, 1]
    positives = tiny_dataset.positives_by_user("test")
    assert [p.tolist() for p in positives] == [[3], [4], [1]]


def test_stats(tiny_dataset):
    stats = tiny_dataset.stats()
    assert stats["users"] == 3
    assert stats["interactions"] == 12
    assert stats["density"] == pytest.approx(12 / 15)


def test_sample_negative_avoids_train_positives(tiny_dataset):
    rng = np.random.default_rng(0)
    for user in range(3):
        positives = set(tiny_dataset.train_positives(user).tolist())
        draws = {sample_negative(tiny_dataset, user, rng) for _ in range(200)}
        assert not draws & positives
        assert draws == set(range(5)) - positives


def test_sample_negatives_vectorized(planted_dataset):
    rng = np.random.default_rng(1)
    users = np.repeat(np.arange(planted_dataset.num_users), 20)
    negatives = sample_negatives(planted_dataset, users, rng)
    train_codes = set((planted_dataset.train[:, 0] * planted_dataset.num_items + planted_dataset.train[:, 1]).tolist())
    assert not set((users * planted_dataset.num_items + negatives).tolist()) & train_codes


def test_binarize_and_inject_noise(interaction_file):
    records = load_interactions(interaction_file)
    positives = binarize(records)
    assert len(positives.noise_pool) > 0
    dataset = split(positives, SplitSpec(seed=0))
    assert dataset.num_users == 4
    pool = len(dataset.noise_pool)
    noisy = inject_noise(dataset, np.random.default_rng(0))
    assert len(noisy.train) == len(dataset.train) + 2 * pool
    assert noisy.noise_injected == 2 * pool
    assert len(noisy.noise_pool) == 0
    np.testing.assert_array_equal(noisy.test, dataset.test)
    # random pairs never duplicate an existing pair
    assert len(np.unique(noisy.train, axis=0)) == len(noisy.train)


def test_binarize_keeping_natural_noise(interaction_file):
    positives = binarize(load_interactions(interaction_file), keep_natural_noise=True)
    assert len(positives.noise_pool) == 0
    assert len(positives.pairs) == 42


def test_inject_noise_without_room():
    dataset = InteractionDataset(
        1,
        3,
        train=np.array([[0, 0]]),
        val=np.array([[0, 1]]),
        test=np.empty((0, 2)),
        noise_pool=np.array([[0, 2]]),
    )
    with pytest.raises(NoiseInjectionError):
        inject_noise(dataset, np.random.default_rng(0))
