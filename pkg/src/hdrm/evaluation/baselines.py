"""Comparators evaluated with the same full-ranking protocol: popularity and BPR-MF."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from loguru import logger
from scipy.special import expit, log_expit

from ..common.errors import ConfigError, TrainingDivergedError
from ..data.dataset import InteractionDataset, sample_negatives
from ..model.optimizer import OptimizerState, adam_step
from .metrics import DEFAULT_KS, RankingResult, evaluate


def popularity_baseline(
    dataset: InteractionDataset,
    ks: Sequence[int] = DEFAULT_KS,
    split: str = "test",
) -> RankingResult:
    """Every user gets the catalogue ordered by train degree."""
    popularity = dataset.popularity.astype(np.float64)

    def score(users: np.ndarray) -> np.ndarray:
        return np.broadcast_to(popularity, (len(users), dataset.num_items))

    return evaluate(dataset, score, split=split, ks=ks)


@dataclass(frozen=True)
class BprConfig:
    dim: int = 16
    epochs: int = 50
    batch_size: int = 1024
    lr: float = 1e-3
    reg: float = 1e-4
    init_std: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 1 or self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("BPR needs dim >= 1, epochs >= 0 and batch_size >= 1")
        if self.reg < 0:
            raise ConfigError("BPR reg must be >= 0")


@dataclass(eq=False)
class MatrixFactorization:
    user: np.ndarray
    item: np.ndarray

    def scores(self, users: np.ndarray) -> np.ndarray:
        return self.user[users] @ self.item.T


def bpr_epoch(
    model: MatrixFactorization,
    dataset: InteractionDataset,
    state: OptimizerState,
    config: BprConfig,
    rng: np.random.Generator,
) -> float:
    """One shuffled pass over the train pairs; returns the mean BPR loss."""
    order = rng.permutation(len(dataset.train))
    total = 0.0
    for start in range(0, len(order), config.batch_size):
        batch = dataset.train[order[start : start + config.batch_size]]
        users, pos = batch[:, 0], batch[:, 1]
        neg = sample_negatives(dataset, users, rng)
        pu, qi, qj = model.user[users], model.item[pos], model.item[neg]
        x = np.sum(pu * (qi - qj), axis=1)
        n = len(batch)
        reg = 0.5 * config.reg * (np.sum(pu**2) + np.sum(qi**2) + np.sum(qj**2))
        total += float(-np.sum(log_expit(x)) + reg)

        # d(-log sigmoid(x))/dx = -sigmoid(-x)
        gx = (-expit(-x) / n)[:, None]
        grad_user = np.zeros_like(model.user)
        grad_item = np.zeros_like(model.item)
        np.add.at(grad_user, users, gx * (qi - qj) + config.reg * pu / n)
        np.add.at(grad_item, pos, gx * pu + config.reg * qi / n)
        np.add.at(grad_item, neg, -gx * pu + config.reg * qj / n)
        adam_step([model.user, model.item], [grad_user, grad_item], state)
    loss = total / max(len(order), 1)
    if not np.isfinite(loss):
        raise TrainingDivergedError("BPR-MF loss became non-finite")
    return loss


def train_bpr(dataset: InteractionDataset, config: BprConfig) -> MatrixFactorization:
    rng = np.random.default_rng(config.seed)
    model = MatrixFactorization(
        rng.normal(0.0, config.init_std, size=(dataset.num_users, config.dim)),
        rng.normal(0.0, config.init_std, size=(dataset.num_items, config.dim)),
    )
    state = OptimizerState.for_params([model.user, model.item], lr=config.lr)
    for epoch in range(1, config.epochs + 1):
        loss = bpr_epoch(model, dataset, state, config, rng)
        logger.debug(f"BPR-MF epoch {epoch}: loss {loss:.5f}")
    return model


def mf_bpr_baseline(
    dataset: InteractionDataset,
    config: BprConfig,
    ks: Sequence[int] = DEFAULT_KS,
    split: str = "test",
) -> RankingResult:
    model = train_bpr(dataset, config)
    return evaluate(dataset, model.scores, split=split, ks=ks)
