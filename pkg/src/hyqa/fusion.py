"""Convex combination of sparse and dense retrieval scores.

Each system's scores are min-max normalized over its own top-pool list; a
passage missing from one list takes that system's normalized floor of 0.
The fused score is w * sparse + (1 - w) * dense, with w tunable by grid
search against Match@k on a dev set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .evalkit import GoldSet, match_at_k
from .scored import ScoredPassage

__all__ = ["FusionConfig", "minmax_normalize", "fuse", "tune_weight"]


@dataclass(frozen=True)
class FusionConfig:
    pool_size: int = 2000
    weight: float = 0.5

    def __post_init__(self):
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError("weight must lie in [0, 1]")


def minmax_normalize(scores: Sequence[float]) -> list[float]:
    """(x - min) / (max - min); a constant list maps every value to 0.5."""
    if len(scores) == 0:
        raise ValueError("cannot normalize an empty score list")
    lo, hi = min(scores), max(scores)
    if hi == lo:
        return [0.5] * len(scores)
    return [(x - lo) / (hi - lo) for x in scores]


def fuse(
    sparse_results: Sequence[ScoredPassage],
    dense_results: Sequence[ScoredPassage],
    config: FusionConfig = FusionConfig(),
) -> list[ScoredPassage]:
    sparse_results = list(sparse_results)[: config.pool_size]
    dense_results = list(dense_results)[: config.pool_size]
    w = config.weight

    def normalized_map(results: Sequence[ScoredPassage]) -> dict[str, float]:
        if not results:
            return {}
        norms = minmax_normalize([r.score for r in results])
        return {r.passage_id: n for r, n in zip(results, norms)}

    sparse_map = normalized_map(sparse_results)
    dense_map = normalized_map(dense_results)
    pool = set(sparse_map) | set(dense_map)
    fused = [
        ScoredPassage(pid, w * sparse_map.get(pid, 0.0) + (1 - w) * dense_map.get(pid, 0.0), "fused")
        for pid in pool
    ]
    fused.sort(key=lambda sp: (-sp.score, sp.passage_id))
    return fused


def tune_weight(
    golds: Sequence[GoldSet],
    sparse_runs: dict[str, Sequence[ScoredPassage]],
    dense_runs: dict[str, Sequence[ScoredPassage]],
    passage_texts: dict[str, str],
    k: int = 20,
    step: float = 0.05,
    pool_size: int = 2000,
) -> tuple[float, float]:
    """Grid-search the sparse weight against Match@k on a dev set.

    Returns (best weight, its Match@k); ties prefer the smaller weight.
    """
    if not golds:
        raise ValueError("tuning requires a non-empty dev set")
    steps = round(1.0 / step)
    best_w, best_metric = 0.0, -1.0
    for i in range(steps + 1):
        w = min(1.0, i * step)
        config = FusionConfig(pool_size=pool_size, weight=w)
        hits = 0
        for gold in golds:
            fused = fuse(
                sparse_runs.get(gold.query_id, []),
                dense_runs.get(gold.query_id, []),
                config,
            )
            hits += match_at_k(fused, gold, k, passage_texts)
        metric = hits / len(golds)
        if metric > best_metric:
            best_w, best_metric = w, metric
    return best_w, best_metric
