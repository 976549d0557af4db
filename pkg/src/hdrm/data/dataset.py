"""Binarized user-item interactions, per-user splits and the noise protocol."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from loguru import logger

from ..common.errors import (
    DataError,
    EmptyDatasetError,
    NegativeSamplingError,
    NoiseInjectionError,
)
from .interaction_parser import InteractionRecords

RATING_THRESHOLD = 4.0
# above this many cells the noise sampler switches to rejection sampling
_DENSE_COMPLEMENT_LIMIT = 5_000_000


def _empty_pairs() -> np.ndarray:
    return np.empty((0, 2), dtype=np.int64)


def _as_pairs(pairs: np.ndarray) -> np.ndarray:
    arr = np.asarray(pairs, dtype=np.int64)
    if arr.size == 0:
        return _empty_pairs()
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DataError(f"pairs must have shape (n, 2), got {arr.shape}")
    return arr


def _sorted_pairs(pairs: np.ndarray) -> np.ndarray:
    pairs = _as_pairs(pairs)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order]


def _pair_codes(pairs: np.ndarray, num_items: int) -> np.ndarray:
    return pairs[:, 0] * num_items + pairs[:, 1]


@dataclass(frozen=True, eq=False)
class PositivePairs:
    """Binarized interactions before splitting.

    ``noise_pool`` holds the pairs rated below the threshold (natural noise).
    """

    pairs: np.ndarray
    noise_pool: np.ndarray
    num_users: int
    num_items: int


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2)
    seed: int = 0
    per_user: bool = True
    min_interactions: int = 3

    def __post_init__(self) -> None:
        if len(self.ratios) != 3 or any(r <= 0 for r in self.ratios):
            raise DataError(f"split ratios must be three positive numbers, got {self.ratios}")
        if not math.isclose(sum(self.ratios), 1.0, abs_tol=1e-9):
            raise DataError(f"split ratios must sum to 1, got {sum(self.ratios)}")
        if self.min_interactions < 3:
            raise DataError("min_interactions must be >= 3")

    def counts(self, n: int) -> tuple[int, int, int]:
        """(train, val, test) sizes: val and test floor with a minimum of one."""
        n_val = max(1, math.floor(self.ratios[1] * n))
        n_test = max(1, math.floor(self.ratios[2] * n))
        return n - n_val - n_test, n_val, n_test


@dataclass(frozen=True, eq=False)
class InteractionDataset:
    """Immutable split dataset. Pair arrays are (n, 2) ``[user, item]`` sorted rows.

    ``user_index[u]`` maps dense user ``u`` back to its id in the loaded records.
    """

    num_users: int
    num_items: int
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    noise_pool: np.ndarray = field(default_factory=_empty_pairs)
    user_index: np.ndarray | None = None
    noise_injected: int = 0

    def __post_init__(self) -> None:
        for name in ("train", "val", "test", "noise_pool"):
            pairs = _sorted_pairs(getattr(self, name))
            if len(pairs) and (
                pairs[:, 0].min() < 0
                or pairs[:, 0].max() >= self.num_users
                or pairs[:, 1].min() < 0
                or pairs[:, 1].max() >= self.num_items
            ):
                raise DataError(f"{name} split has ids outside the id space")
            object.__setattr__(self, name, pairs)
        if self.user_index is None:
            object.__setattr__(self, "user_index", np.arange(self.num_users, dtype=np.int64))

    # -- adjacency -----------------------------------------------------------
    @cached_property
    def train_matrix(self) -> sp.csr_matrix:
        """Binary user x item matrix of the train split."""
        data = np.ones(len(self.train), dtype=np.float64)
        matrix = sp.csr_matrix(
            (data, (self.train[:, 0], self.train[:, 1])),
            shape=(self.num_users, self.num_items),
        )
        matrix.sort_indices()
        return matrix

    @cached_property
    def item_matrix(self) -> sp.csr_matrix:
        matrix = self.train_matrix.T.tocsr()
        matrix.sort_indices()
        return matrix

    @property
    def user_degree(self) -> np.ndarray:
        return np.diff(self.train_matrix.indptr)

    @property
    def item_degree(self) -> np.ndarray:
        return np.diff(self.item_matrix.indptr)

    @property
    def popularity(self) -> np.ndarray:
        return self.item_degree

    def user_neighbors(self, user: int) -> np.ndarray:
        m = self.train_matrix
        return m.indices[m.indptr[user] : m.indptr[user + 1]]

    def item_neighbors(self, item: int) -> np.ndarray:
        m = self.item_matrix
        return m.indices[m.indptr[item] : m.indptr[item + 1]]

    def train_positives(self, user: int) -> np.ndarray:
        return self.user_neighbors(user)

    def positives_by_user(self, split: str) -> list[np.ndarray]:
        pairs = getattr(self, split)
        bounds = np.searchsorted(pairs[:, 0], np.arange(self.num_users + 1))
        return [pairs[bounds[u] : bounds[u + 1], 1] for u in range(self.num_users)]

    @cached_property
    def _taken_codes(self) -> np.ndarray:
        every = np.concatenate([self.train, self.val, self.test, self.noise_pool])
        return np.unique(_pair_codes(every, self.num_items))

    # -- summaries -----------------------------------------------------------
    def stats(self) -> dict[str, float | int]:
        total = len(self.train) + len(self.val) + len(self.test)
        cells = self.num_users * self.num_items
        return {
            "users": self.num_users,
            "items": self.num_items,
            "interactions": total,
            "train": len(self.train),
            "val": len(self.val),
            "test": len(self.test),
            "density": total / cells if cells else 0.0,
            "natural_noise": len(self.noise_pool),
            "noise_injected": self.noise_injected,
        }


def binarize(
    records: InteractionRecords,
    threshold: float = RATING_THRESHOLD,
    keep_natural_noise: bool = False,
) -> PositivePairs:
    """Keep ratings >= threshold; lower ratings form the natural-noise pool.

    With ``keep_natural_noise`` the low-rated pairs are kept as positives.
    """
    frame = records.frame
    pairs = frame[["user", "item"]].to_numpy(dtype=np.int64)
    positive = frame["rating"].to_numpy() >= threshold
    if keep_natural_noise:
        logger.info(f"Keeping {int((~positive).sum())} low-rated pairs as positives")
        kept, pool = pairs, _empty_pairs()
    else:
        kept, pool = pairs[positive], pairs[~positive]
    logger.info(
        f"Binarized at rating >= {threshold}: {len(kept)} positives, "
        f"{len(pool)} in the natural-noise pool"
    )
    return PositivePairs(
        pairs=_as_pairs(kept),
        noise_pool=_as_pairs(pool),
        num_users=records.num_users,
        num_items=records.num_items,
    )


def split(pairs: PositivePairs, spec: SplitSpec) -> InteractionDataset:
    """Split positives into train/val/test and re-densify the surviving users.

    Users with fewer than ``spec.min_interactions`` positives are dropped.
    Item ids are kept as they are, including items without train pairs.
    """
    data = _sorted_pairs(pairs.pairs)
    if len(data) == 0:
        raise EmptyDatasetError("no positive interactions to split")

    counts = np.bincount(data[:, 0], minlength=pairs.num_users)
    kept_users = np.flatnonzero(counts >= spec.min_interactions)
    dropped = int(np.count_nonzero((counts > 0) & (counts < spec.min_interactions)))
    if dropped:
        logger.warning(
            f"Dropped {dropped} users with fewer than {spec.min_interactions} positives"
        )
    if len(kept_users) == 0:
        raise EmptyDatasetError(
            f"no user has at least {spec.min_interactions} positive interactions"
        )

    remap = np.full(pairs.num_users, -1, dtype=np.int64)
    remap[kept_users] = np.arange(len(kept_users))
    data = data[remap[data[:, 0]] >= 0]
    data[:, 0] = remap[data[:, 0]]

    rng = np.random.default_rng(spec.seed)
    if spec.per_user:
        train, val, test = _split_per_user(data, spec, rng)
    else:
        train, val, test = _split_global(data, spec, rng)

    pool = _as_pairs(pairs.noise_pool)
    pool = pool[remap[pool[:, 0]] >= 0] if len(pool) else pool
    if len(pool):
        pool = pool.copy()
        pool[:, 0] = remap[pool[:, 0]]

    dataset = InteractionDataset(
        num_users=len(kept_users),
        num_items=pairs.num_items,
        train=train,
        val=val,
        test=test,
        noise_pool=pool,
        user_index=kept_users,
    )
    logger.info(
        f"Split {dataset.num_users} users / {dataset.num_items} items into "
        f"{len(train)} train, {len(val)} val, {len(test)} test pairs"
    )
    return dataset


def _split_per_user(data, spec, rng):
    bounds = np.searchsorted(data[:, 0], np.arange(data[-1, 0] + 2))
    parts: tuple[list, list, list] = ([], [], [])
    for user in range(len(bounds) - 1):
        rows = data[bounds[user] : bounds[user + 1]]
        n_train, n_val, _ = spec.counts(len(rows))
        rows = rows[rng.permutation(len(rows))]
        parts[0].append(rows[:n_train])
        parts[1].append(rows[n_train : n_train + n_val])
        parts[2].append(rows[n_train + n_val :])
    return tuple(np.concatenate(p) for p in parts)


def _split_global(data, spec, rng):
    n_train, n_val, _ = spec.counts(len(data))
    shuffled = data[rng.permutation(len(data))]
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_val],
        shuffled[n_train + n_val :],
    )


def sample_negative(dataset: InteractionDataset, user: int, rng: np.random.Generator) -> int:
    """Uniform draw from the items the user has no train interaction with."""
    positives = dataset.train_positives(user)
    free = dataset.num_items - len(positives)
    if free <= 0:
        raise NegativeSamplingError(f"user {user} interacted with every item")
    k = int(rng.integers(free))
    # the k-th free item skips every positive at or below it
    shifted = positives - np.arange(len(positives))
    return int(k + np.searchsorted(shifted, k, side="right"))


def sample_negatives(
    dataset: InteractionDataset,
    users: np.ndarray,
    rng: np.random.Generator,
    max_rounds: int = 10,
) -> np.ndarray:
    """Vectorized ``sample_negative``: rejection rounds, exact draw for stragglers."""
    users = np.asarray(users, dtype=np.int64)
    if np.any(dataset.user_degree[users] >= dataset.num_items):
        raise NegativeSamplingError("a user in the batch interacted with every item")
    train_codes = _pair_codes(dataset.train, dataset.num_items)
    out = rng.integers(dataset.num_items, size=len(users))
    pending = np.isin(users * dataset.num_items + out, train_codes)
    for _ in range(max_rounds):
        if not pending.any():
            return out
        redraw = rng.integers(dataset.num_items, size=int(pending.sum()))
        out[pending] = redraw
        pending[pending] = np.isin(users[pending] * dataset.num_items + redraw, train_codes)
    for idx in np.flatnonzero(pending):
        out[idx] = sample_negative(dataset, int(users[idx]), rng)
    return out


def inject_noise(dataset: InteractionDataset, rng: np.random.Generator) -> InteractionDataset:
    """Add the natural-noise pool plus as many uniformly random unseen pairs to train."""
    pool = dataset.noise_pool
    n_random = len(pool)
    taken = dataset._taken_codes
    cells = dataset.num_users * dataset.num_items
    free = cells - len(taken)
    if n_random > free:
        raise NoiseInjectionError(
            f"cannot add {n_random} random pairs: only {free} unseen pairs exist"
        )
    if n_random == 0:
        logger.info("Natural-noise pool is empty; nothing injected")
        fake = _empty_pairs()
    elif cells <= _DENSE_COMPLEMENT_LIMIT:
        complement = np.setdiff1d(np.arange(cells, dtype=np.int64), taken, assume_unique=True)
        codes = rng.choice(complement, size=n_random, replace=False)
        fake = np.stack([codes // dataset.num_items, codes % dataset.num_items], axis=1)
    else:
        fake = _reject_unseen(taken, n_random, dataset.num_users, dataset.num_items, rng)

    train = np.concatenate([dataset.train, pool, fake])
    logger.info(
        f"Injected {len(pool)} natural and {len(fake)} random noise pairs into train"
    )
    return InteractionDataset(
        num_users=dataset.num_users,
        num_items=dataset.num_items,
        train=train,
        val=dataset.val,
        test=dataset.test,
        noise_pool=_empty_pairs(),
        user_index=dataset.user_index,
        noise_injected=dataset.noise_injected + len(pool) + len(fake),
    )


def _reject_unseen(taken, n, num_users, num_items, rng) -> np.ndarray:
    chosen = np.empty(0, dtype=np.int64)
    while len(chosen) < n:
        draw = rng.integers(num_users * num_items, size=2 * (n - len(chosen)))
        draw = draw[~np.isin(draw, taken)]
        chosen = np.concatenate([chosen, draw])
        _, first = np.unique(chosen, return_index=True)
        chosen = chosen[np.sort(first)]
    chosen = chosen[:n]
    return np.stack([chosen // num_items, chosen % num_items], axis=1)
