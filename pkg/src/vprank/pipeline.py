"""End-to-end helpers: subsample, rank every probe frame, aggregate, evaluate."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

from .aggregate import DEFAULT_EXACT_CAP, AggregatedRanking, CEMCConfig, aggregate
from .core import Dataset, derive_seed, subsample_dataset
from .metrics import EvaluationResult, evaluate
from .ranking import DistanceMode, dataset_base_rankings

__all__ = ["consensus_rankings", "evaluate_dataset"]


def consensus_rankings(
    dataset: Dataset,
    method: str = "count",
    *,
    mode=DistanceMode.MIN,
    k=1,
    seed: int = 0,
    config: CEMCConfig | None = None,
    cap: int = DEFAULT_EXACT_CAP,
    workers: int = 1,
) -> list[AggregatedRanking]:
    """Consensus gallery ranking for every probe video.

    Probe ``i`` aggregates with seed ``derive_seed(seed, i)``, so the result
    does not depend on how probes are scheduled across ``workers``.
    """
    data = subsample_dataset(dataset, k)
    base = dataset_base_rankings(data, mode, workers)

    def run(i: int) -> AggregatedRanking:
        return aggregate(base[i], method, seed=derive_seed(seed, i), config=config, cap=cap)

    if workers == 1 or len(base) <= 1:
        return [run(i) for i in range(len(base))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, range(len(base))))


def evaluate_dataset(
    dataset: Dataset,
    method: str = "count",
    cutoffs: Sequence[int] = (1, 5, 10, 20),
    **kwargs,
) -> EvaluationResult:
    """Run :func:`consensus_rankings` and score it against identity labels."""
    consensus = consensus_rankings(dataset, method, **kwargs)
    return evaluate(consensus, dataset.truth(), cutoffs)
