from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from hdrm.common.run_config import RunConfig
from hdrm.data.dataset import InteractionDataset, PositivePairs, SplitSpec, split
from hdrm.geometry.manifold import ManifoldConfig, make_manifold


def planted_pairs(
    num_users: int = 40,
    num_items: int = 30,
    blocks: int = 2,
    per_user: int = 8,
    noise: float = 0.05,
    seed: int = 0,
) -> PositivePairs:
    """Users in block b mostly like items in block b."""
    rng = np.random.default_rng(seed)
    user_block = np.arange(num_users) % blocks
    item_block = np.arange(num_items) % blocks
    rows = []
    for user in range(num_users):
        own = np.flatnonzero(item_block == user_block[user])
        other = np.flatnonzero(item_block != user_block[user])
        n_noise = int(rng.binomial(per_user, noise))
        picks = np.concatenate(
            [
                rng.choice(own, size=per_user - n_noise, replace=False),
                rng.choice(other, size=n_noise, replace=False),
            ]
        )
        rows.extend((user, int(item)) for item in picks)
    pairs = np.array(rows, dtype=np.int64)
    return PositivePairs(pairs, np.empty((0, 2), dtype=np.int64), num_users, num_items)


@pytest.fixture
def planted_dataset() -> InteractionDataset:
    return split(planted_pairs(), SplitSpec(seed=0))


@pytest.fixture
def tiny_dataset() -> InteractionDataset:
    # 3 users, 5 items; every user keeps at least one train, val and test pair
    train = np.array([[0, 0], [0, 1], [1, 1], [1, 2], [2, 3], [2, 4]])
    val = np.array([[0, 2], [1, 3], [2, 0]])
    test = np.array([[0, 3], [1, 4], [2, 1]])
    return InteractionDataset(3, 5, train, val, test)


@pytest.fixture
def small_run() -> RunConfig:
    return RunConfig(
        seed=7,
        dim=4,
        layers=2,
        user_clusters=2,
        item_clusters=2,
        steps=6,
        inference_steps=3,
        hidden_dim=16,
        time_embed_dim=8,
        batch_size=64,
        epochs_stage1=3,
        epochs_stage2=2,
        patience=5,
        bpr_epochs=3,
    )


@pytest.fixture(params=["lorentz", "poincare"])
def manifold(request):
    return make_manifold(ManifoldConfig(request.param, -1.0, 3))


@pytest.fixture
def lorentz():
    return make_manifold(ManifoldConfig("lorentz", -1.0, 3))


@pytest.fixture
def interaction_file(tmp_path: Path) -> Path:
    """A tab-separated log that keeps 4 users after binarizing at 4.0."""
    rng = np.random.default_rng(3)
    lines = ["user\titem\trating\ttimestamp"]
    for user in range(6):
        items = rng.choice(12, size=7, replace=False)
        for k, item in enumerate(items):
            rating = 5 if k < 5 or user >= 4 else 2
            if user >= 4:
                rating = 5 if k < 2 else 1
            lines.append(f"u{user}\ti{item}\t{rating}\t{1000 + k}")
    path = tmp_path / "ratings.tsv"
    path.write_text("\n".join(lines) + "\n")
    return path
