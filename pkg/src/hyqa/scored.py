"""Shared scored-result record used by sparse, dense, and fused retrieval."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class ScoredPassage:
    passage_id: str
    score: float
    provenance: str  # "sparse" | "dense" | "fused"

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f"non-finite score for passage {self.passage_id!r}")
