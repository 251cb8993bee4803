"""CMC and mean average precision for ranked gallery lists."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = ["EvaluationResult", "cmc", "average_precision", "mean_average_precision", "evaluate"]


@dataclass(frozen=True)
class EvaluationResult:
    cmc: Mapping[int, float]
    map_score: float
    per_query_ap: tuple[float, ...]
    num_queries: int

    def to_dict(self) -> dict:
        return {
            "cmc": {str(k): v for k, v in sorted(self.cmc.items())},
            "map": self.map_score,
            "per_query_ap": list(self.per_query_ap),
            "num_queries": self.num_queries,
        }


def _order(ranking) -> np.ndarray:
    return np.asarray(getattr(ranking, "order", ranking), dtype=np.int64)


def _hits(rankings: Sequence, truth: Sequence[Iterable[int]]) -> list[np.ndarray]:
    """Boolean relevance vector per query, in ranked order."""
    if len(rankings) != len(truth):
        raise ValueError(f"got {len(rankings)} rankings but {len(truth)} truth sets")
    out = []
    for q, (ranking, relevant) in enumerate(zip(rankings, truth)):
        order = _order(ranking)
        relevant = set(int(j) for j in relevant)
        if not relevant:
            raise ValueError(f"query {q} has an empty truth set")
        unknown = relevant.difference(range(order.size))
        if unknown:
            raise ValueError(f"query {q} truth indices {sorted(unknown)} are outside the gallery of size {order.size}")
        out.append(np.isin(order, list(relevant)))
    return out


def cmc(rankings: Sequence, truth: Sequence[Iterable[int]], cutoffs: Iterable[int]) -> dict[int, float]:
    """Fraction of queries whose first true match sits at 1-based position ``<= k``.

    Args:
        rankings: One ranked gallery order per query (arrays or objects with
            an ``order`` attribute).
        truth: Gallery indices that match each query.
        cutoffs: Rank cutoffs, each between 1 and the gallery size.
    """
    hits = _hits(rankings, truth)
    cutoffs = sorted({int(k) for k in cutoffs})
    n = min((h.size for h in hits), default=0)
    for k in cutoffs:
        if k < 1 or (hits and k > n):
            raise ValueError(f"cutoff {k} is outside 1..{n}")
    if not hits:
        return {k: 0.0 for k in cutoffs}
    first = np.array([int(np.argmax(h)) + 1 for h in hits])
    return {k: float(np.count_nonzero(first <= k)) / len(hits) for k in cutoffs}


def average_precision(hits: np.ndarray) -> float:
    """Uninterpolated AP of one relevance vector in ranked order."""
    hits = np.asarray(hits, dtype=bool)
    positions = np.flatnonzero(hits) + 1
    if positions.size == 0:
        raise ValueError("average precision needs at least one relevant item")
    precision = np.arange(1, positions.size + 1) / positions
    return float(precision.sum() / positions.size)


def mean_average_precision(rankings: Sequence, truth: Sequence[Iterable[int]]) -> float:
    return _map(_hits(rankings, truth))[0]


def _map(hits: list[np.ndarray]) -> tuple[float, tuple[float, ...]]:
    aps = tuple(average_precision(h) for h in hits)
    if not aps:
        return 0.0, aps
    total = 0.0
    for ap in aps:  # fixed summation order
        total += ap
    return total / len(aps), aps


def evaluate(rankings: Sequence, truth: Sequence[Iterable[int]], cutoffs: Iterable[int] = (1, 5, 10, 20)) -> EvaluationResult:
    """CMC at ``cutoffs`` (clipped to the gallery size) plus mAP."""
    hits = _hits(rankings, truth)
    n = min((h.size for h in hits), default=0)
    kept = [k for k in cutoffs if k <= n] if hits else list(cutoffs)
    curve = cmc(rankings, truth, kept)
    score, aps = _map(hits)
    return EvaluationResult(curve, score, aps, len(hits))
