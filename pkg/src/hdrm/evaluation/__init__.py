from .baselines import BprConfig, mf_bpr_baseline, popularity_baseline
from .metrics import RankingResult, evaluate, ndcg_at_k, rank_items, recall_at_k

__all__ = [
    "BprConfig",
    "RankingResult",
    "evaluate",
    "mf_bpr_baseline",
    "ndcg_at_k",
    "popularity_baseline",
    "rank_items",
    "recall_at_k",
]
