"""Full-ranking Recall@K / NDCG@K over every item a user has not trained on."""

from __future__ import annotations

import io
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from loguru import logger
from rich.console import Console
from rich.table import Table

from ..common.errors import NonFiniteScoreError, ShapeError
from ..data.dataset import InteractionDataset

DEFAULT_KS = (10, 20)
USER_BATCH = 256

ScoreFn = Callable[[np.ndarray], np.ndarray]


def rank_items(scores: np.ndarray, exclude: np.ndarray | None = None, k: int | None = None) -> np.ndarray:
    """Item ids by descending score, ties by ascending id, excluded items removed."""
    scores = np.asarray(scores, dtype=np.float64)
    candidates = np.ones(len(scores), dtype=bool)
    if exclude is not None and len(exclude):
        candidates[np.asarray(exclude, dtype=np.int64)] = False
    ids = np.flatnonzero(candidates)
    order = ids[np.argsort(-scores[ids], kind="stable")]
    return order if k is None else order[:k]


def recall_at_k(ranked: np.ndarray, test_pos: np.ndarray, k: int) -> float | None:
    """|top-K ∩ test| / |test|; None when the user has nothing to recall."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(test_pos) == 0:
        return None
    hits = np.isin(np.asarray(ranked)[:k], test_pos).sum()
    return float(hits) / len(test_pos)


def ndcg_at_k(ranked: np.ndarray, test_pos: np.ndarray, k: int) -> float | None:
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(test_pos) == 0:
        return None
    top = np.asarray(ranked)[:k]
    discounts = 1.0 / np.log2(np.arange(2, len(top) + 2))
    dcg = float(np.sum(discounts[np.isin(top, test_pos)]))
    ideal = 1.0 / np.log2(np.arange(2, min(k, len(test_pos)) + 2))
    return dcg / float(ideal.sum())


@dataclass(eq=False)
class RankingResult:
    ranked: dict[int, np.ndarray]
    per_user: pd.DataFrame
    means: dict[str, float] = field(default_factory=dict)

    @property
    def users_evaluated(self) -> int:
        return len(self.per_user)

    def to_document(self) -> dict[str, float | int]:
        document: dict[str, float | int] = dict(self.means)
        document["users_evaluated"] = self.users_evaluated
        return document


def _evaluate_block(
    users: np.ndarray,
    score_fn: ScoreFn,
    train_pos: list[np.ndarray],
    target_pos: list[np.ndarray],
    ks: Sequence[int],
) -> tuple[dict[int, np.ndarray], list[dict[str, float]]]:
    scores = score_fn(users)
    if scores.shape[0] != len(users):
        raise ShapeError(f"score function returned {scores.shape[0]} rows for {len(users)} users")
    if not np.all(np.isfinite(scores)):
        bad = users[~np.all(np.isfinite(scores), axis=1)]
        raise NonFiniteScoreError(f"non-finite scores for {len(bad)} users, first is user {bad[0]}")
    kmax = max(ks)
    ranked: dict[int, np.ndarray] = {}
    rows: list[dict[str, float]] = []
    for row, user in zip(scores, users):
        top = rank_items(row, train_pos[user], kmax)
        ranked[int(user)] = top
        record: dict[str, float] = {"user": int(user)}
        for k in ks:
            record[f"recall@{k}"] = recall_at_k(top, target_pos[user], k)
            record[f"ndcg@{k}"] = ndcg_at_k(top, target_pos[user], k)
        rows.append(record)
    return ranked, rows


def evaluate(
    dataset: InteractionDataset,
    score_fn: ScoreFn,
    split: str = "test",
    ks: Sequence[int] = DEFAULT_KS,
    threads: int = 1,
    batch: int = USER_BATCH,
) -> RankingResult:
    """Rank the full catalogue for every user with a non-empty ``split`` set.

    ``score_fn(users)`` returns a (len(users), num_items) score matrix.
    """
    train_pos = dataset.positives_by_user("train")
    target_pos = dataset.positives_by_user(split)
    users = np.array([u for u in range(dataset.num_users) if len(target_pos[u])], dtype=np.int64)
    blocks = [users[i : i + batch] for i in range(0, len(users), batch)]

    def run(block: np.ndarray):
        return _evaluate_block(block, score_fn, train_pos, target_pos, ks)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, blocks))
    else:
        results = [run(block) for block in blocks]

    ranked: dict[int, np.ndarray] = {}
    rows: list[dict[str, float]] = []
    for block_ranked, block_rows in results:
        ranked.update(block_ranked)
        rows.extend(block_rows)
    columns = ["user"] + [f"{name}@{k}" for k in ks for name in ("recall", "ndcg")]
    per_user = pd.DataFrame(rows, columns=columns)
    means = {
        name: float(per_user[name].mean()) if len(per_user) else 0.0 for name in columns[1:]
    }
    logger.debug(f"Evaluated {len(per_user)} users on the {split} split")
    return RankingResult(ranked=ranked, per_user=per_user, means=means)


def metrics_table(rows: dict[str, dict[str, float | int]], title: str = "Ranking metrics") -> Table:
    table = Table(title=title)
    table.add_column("Model")
    metric_names: list[str] = []
    for document in rows.values():
        for name in document:
            if name not in metric_names:
                metric_names.append(name)
    for name in metric_names:
        table.add_column(name, justify="right")
    for label, document in rows.items():
        cells = []
        for name in metric_names:
            value = document.get(name)
            if value is None:
                cells.append("-")
            elif isinstance(value, float):
                cells.append(f"{value:.4f}")
            else:
                cells.append(str(value))
        table.add_row(label, *cells)
    return table


def render_table(table: Table, width: int = 120) -> str:
    """Plain-text rendering of a rich table, for files."""
    buffer = io.StringIO()
    Console(file=buffer, width=width, color_system=None, force_terminal=False).print(table)
    return buffer.getvalue()
