"""
Fuse an ensemble of base rankings into a single consensus ranking.

Three aggregators share one interface and one sufficient statistic, the
pairwise count matrix ``counts[j, k]`` (how many base rankings put gallery
``j`` ahead of gallery ``k``):

``count``
    Score each gallery entry by the total number of pairwise wins across
    all base rankings and sort by that score, highest first.
``kemeny``
    Exact Kemeny consensus: the permutation with the smallest total
    Kendall-tau distance to the base rankings. Solved by dynamic
    programming over subsets, so it is limited to small galleries.
``cemc``
    Cross-Entropy Monte Carlo search for the Kemeny consensus, which scales
    to galleries the exact solver cannot handle.

Because every aggregator reads the base rankings only through ``counts``,
the consensus cannot depend on the order in which frames were presented.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import make_rng
from .ranking import BaseRanking

__all__ = [
    "CapacityError",
    "PairwisePreference",
    "AggregatedRanking",
    "CEMCConfig",
    "METHODS",
    "DEFAULT_EXACT_CAP",
    "pairwise_counts",
    "majority",
    "kendall_distance",
    "consensus_cost",
    "aggregate_count",
    "aggregate_kemeny_exact",
    "aggregate_cemc",
    "aggregate",
]

METHODS = ("count", "kemeny", "cemc")
DEFAULT_EXACT_CAP = 10


class CapacityError(RuntimeError):
    """The exact solver was asked for a gallery larger than its cap."""


@dataclass(frozen=True, eq=False)
class PairwisePreference:
    """Pairwise count matrix over ``total_rankings`` base rankings.

    Invariants: ``counts[j, k] + counts[k, j] == total_rankings`` for
    ``j != k`` and the diagonal is zero.
    """

    counts: np.ndarray
    total_rankings: int

    def __post_init__(self) -> None:
        counts = np.array(self.counts, dtype=np.int64, copy=True)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError(f"counts must be a square matrix, got shape {counts.shape}")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "total_rankings", int(self.total_rankings))

    @property
    def size(self) -> int:
        return int(self.counts.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PairwisePreference):
            return NotImplemented
        return self.total_rankings == other.total_rankings and np.array_equal(self.counts, other.counts)


@dataclass(frozen=True, eq=False)
class AggregatedRanking:
    """Consensus permutation with per-gallery scores (higher is more favoured).

    ``scores`` is indexed by gallery entry, not by position.
    ``position_probabilities`` is only set by the CE-MC aggregator; row ``j``
    is the final sampling distribution of gallery ``j`` over positions.
    """

    order: np.ndarray
    scores: np.ndarray
    method: str = ""
    params: dict = field(default_factory=dict)
    position_probabilities: np.ndarray | None = None

    def __post_init__(self) -> None:
        order = BaseRanking(self.order).order
        scores = np.array(self.scores, dtype=np.float64, copy=True)
        if scores.shape != order.shape:
            raise ValueError(f"scores shape {scores.shape} does not match order shape {order.shape}")
        scores.setflags(write=False)
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "scores", scores)

    @property
    def size(self) -> int:
        return int(self.order.size)

    def positions(self) -> np.ndarray:
        pos = np.empty_like(self.order)
        pos[self.order] = np.arange(self.order.size)
        return pos

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AggregatedRanking):
            return NotImplemented
        return np.array_equal(self.order, other.order) and np.array_equal(self.scores, other.scores)

    def __repr__(self) -> str:
        return f"AggregatedRanking(method={self.method!r}, order={self.order.tolist()})"


@dataclass(frozen=True)
class CEMCConfig:
    """Cross-Entropy Monte Carlo settings.

    Attributes:
        samples: Permutations drawn per iteration.
        elite_fraction: Share of the best samples used to refit the model.
        alpha: Smoothing weight given to the elite frequencies.
        max_iters: Hard iteration limit.
        patience: Stop after this many iterations without a better objective.
    """

    samples: int = 200
    elite_fraction: float = 0.1
    alpha: float = 0.7
    max_iters: int = 100
    patience: int = 10

    def __post_init__(self) -> None:
        if self.samples < 1:
            raise ValueError(f"samples must be >= 1, got {self.samples}")
        if not 0.0 < self.elite_fraction <= 1.0:
            raise ValueError(f"elite_fraction must lie in (0, 1], got {self.elite_fraction}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")

    @property
    def n_elite(self) -> int:
        return max(1, min(self.samples, math.ceil(round(self.elite_fraction * self.samples, 9))))


def _orders(rankings: Sequence[BaseRanking]) -> np.ndarray:
    if len(rankings) == 0:
        raise ValueError("at least one base ranking is required")
    sizes = {r.size for r in rankings}
    if len(sizes) != 1:
        raise ValueError(f"all base rankings must rank the same gallery, got sizes {sorted(sizes)}")
    return np.stack([r.order for r in rankings])


def pairwise_counts(rankings: Sequence[BaseRanking]) -> PairwisePreference:
    """Count, for every gallery pair, how many rankings place ``j`` before ``k``."""
    orders = _orders(rankings)
    t, n = orders.shape
    pos = np.empty_like(orders)
    np.put_along_axis(pos, orders, np.arange(n)[None, :].repeat(t, axis=0), axis=1)
    counts = np.zeros((n, n), dtype=np.int64)
    # chunk over rankings to bound the (chunk, N, N) temporary
    step = max(1, 4_000_000 // max(1, n * n))
    for lo in range(0, t, step):
        block = pos[lo : lo + step]
        counts += (block[:, :, None] < block[:, None, :]).sum(axis=0)
    return PairwisePreference(counts, t)


def majority(pref: PairwisePreference, j: int, k: int) -> bool:
    """True iff strictly more than half of the rankings put ``j`` before ``k``."""
    if j == k:
        raise ValueError("majority is undefined for j == k")
    return 2 * int(pref.counts[j, k]) > pref.total_rankings


def kendall_distance(a: BaseRanking, b: BaseRanking) -> int:
    """Number of gallery pairs the two rankings order differently."""
    if a.size != b.size:
        raise ValueError(f"rankings rank galleries of different size: {a.size} vs {b.size}")
    pa, pb = a.positions(), b.positions()
    da = np.sign(pa[:, None] - pa[None, :])
    db = np.sign(pb[:, None] - pb[None, :])
    return int(np.count_nonzero(da != db) // 2)


def _as_counts(source) -> np.ndarray:
    if isinstance(source, PairwisePreference):
        return source.counts
    return pairwise_counts(source).counts


def consensus_cost(order, source) -> int:
    """Total Kendall distance from ``order`` to the base rankings.

    ``source`` is either the base rankings or their :class:`PairwisePreference`;
    the cost is ``sum(counts[b, a])`` over pairs with ``a`` placed before ``b``.
    """
    counts = _as_counts(source)
    order = np.asarray(getattr(order, "order", order), dtype=np.int64)
    permuted = counts[np.ix_(order, order)]
    return int(np.tril(permuted, -1).sum())


def _batch_costs(perms: np.ndarray, counts: np.ndarray) -> np.ndarray:
    # perms: (S, N) item at each position
    permuted = counts[perms[:, :, None], perms[:, None, :]]
    return np.tril(permuted, -1).sum(axis=(1, 2))


def _rank_by_score(scores: np.ndarray) -> np.ndarray:
    # descending score, ties by ascending index
    return np.argsort(-scores, kind="stable")


def aggregate_count(rankings: Sequence[BaseRanking]) -> AggregatedRanking:
    """Rank gallery entries by their total number of pairwise wins."""
    return _count_from_pref(pairwise_counts(rankings))


def _count_from_pref(pref: PairwisePreference) -> AggregatedRanking:
    scores = pref.counts.sum(axis=1).astype(np.float64)
    return AggregatedRanking(_rank_by_score(scores), scores, method="count")


def _kemeny_dp(counts: np.ndarray) -> tuple[list[int], int]:
    n = counts.shape[0]
    full = (1 << n) - 1
    c = counts.tolist()
    # lead[j][s]: cost of placing j ahead of every member of s
    lead = [[0] * (full + 1) for _ in range(n)]
    for s in range(1, full + 1):
        low = (s & -s).bit_length() - 1
        rest = s & (s - 1)
        for j in range(n):
            lead[j][s] = lead[j][rest] + c[low][j]
    best = [0] * (full + 1)
    for s in range(1, full + 1):
        m = None
        bits = s
        while bits:
            j = (bits & -bits).bit_length() - 1
            bits &= bits - 1
            rest = s & ~(1 << j)
            v = lead[j][rest] + best[rest]
            if m is None or v < m:
                m = v
        best[s] = m
    # smallest feasible leader at each step gives the lexicographically first optimum
    order = []
    s = full
    while s:
        for j in range(n):
            if s >> j & 1:
                rest = s & ~(1 << j)
                if lead[j][rest] + best[rest] == best[s]:
                    order.append(j)
                    s = rest
                    break
    return order, best[full]


def aggregate_kemeny_exact(rankings: Sequence[BaseRanking], cap: int = DEFAULT_EXACT_CAP) -> AggregatedRanking:
    """Exact Kemeny consensus; ties resolve to the lexicographically smallest order.

    Raises:
        CapacityError: If the gallery has more than ``cap`` entries.
    """
    pref = pairwise_counts(rankings)
    return _kemeny_from_pref(pref, cap)


def _kemeny_from_pref(pref: PairwisePreference, cap: int) -> AggregatedRanking:
    n = pref.size
    if n > cap:
        raise CapacityError(
            f"exact Kemeny aggregation is capped at {cap} gallery entries, got {n}; "
            "use the 'count' or 'cemc' aggregator instead"
        )
    order, cost = _kemeny_dp(pref.counts)
    scores = np.empty(n, dtype=np.float64)
    scores[order] = n - np.arange(n)
    return AggregatedRanking(order, scores, method="kemeny", params={"cap": cap, "cost": cost})


def _sample_permutations(prob: np.ndarray, samples: int, rng: np.random.Generator) -> np.ndarray:
    n = prob.shape[0]
    avail = np.ones((samples, n), dtype=bool)
    perms = np.empty((samples, n), dtype=np.int64)
    rows = np.arange(samples)
    draws = rng.random((n, samples))
    for pos in range(n):
        w = prob[:, pos][None, :] * avail
        cum = np.cumsum(w, axis=1)
        dead = cum[:, -1] <= 0.0
        if dead.any():
            cum[dead] = np.cumsum(avail[dead], axis=1)
        u = draws[pos] * cum[:, -1]
        pick = (cum <= u[:, None]).sum(axis=1)
        # rounding can push u onto the total; fall back to the last free item
        last_free = n - 1 - np.argmax(avail[:, ::-1], axis=1)
        pick = np.minimum(pick, last_free)
        perms[:, pos] = pick
        avail[rows, pick] = False
    return perms


def _lex_first(perms: np.ndarray) -> np.ndarray:
    return perms[np.lexsort(perms.T[::-1])[0]]


def aggregate_cemc(rankings: Sequence[BaseRanking], config: CEMCConfig | None = None, seed: int = 0) -> AggregatedRanking:
    """Cross-Entropy Monte Carlo search for a minimum total-Kendall consensus.

    The search keeps an ``N x N`` matrix of item-to-position probabilities,
    samples permutations from it, and refits it towards the elite samples.
    The counting consensus seeds the incumbent, so the result is never worse
    than :func:`aggregate_count`. Iteration ``i`` draws from the substream
    ``(seed, i)``, making the run fully reproducible.
    """
    config = config or CEMCConfig()
    return _cemc_from_pref(pairwise_counts(rankings), config, seed)


def _cemc_from_pref(pref: PairwisePreference, config: CEMCConfig, seed: int) -> AggregatedRanking:
    counts = pref.counts
    n = pref.size
    prob = np.full((n, n), 1.0 / n)
    best = _count_from_pref(pref).order.copy()
    best_cost = consensus_cost(best, pref)
    n_elite = config.n_elite
    cols = np.arange(n)
    stall = 0
    iters = 0
    for it in range(config.max_iters):
        iters = it + 1
        rng = make_rng(seed, it)
        perms = _sample_permutations(prob, config.samples, rng)
        costs = _batch_costs(perms, counts)
        ranked = np.argsort(costs, kind="stable")
        elite = perms[ranked[:n_elite]]
        freq = np.zeros((n, n))
        np.add.at(freq, (elite, np.broadcast_to(cols, elite.shape)), 1.0)
        prob = (1.0 - config.alpha) * prob + config.alpha * (freq / n_elite)

        top_cost = int(costs[ranked[0]])
        top = _lex_first(perms[costs == top_cost])
        if top_cost < best_cost:
            best, best_cost, stall = top, top_cost, 0
        else:
            if top_cost == best_cost and tuple(top) < tuple(best):
                best = top
            stall += 1
            if stall >= config.patience:
                break
    scores = np.empty(n, dtype=np.float64)
    scores[best] = n - np.arange(n)
    params = asdict(config) | {"iterations": iters, "cost": best_cost}
    prob.setflags(write=False)
    return AggregatedRanking(best, scores, method="cemc", params=params, position_probabilities=prob)


def aggregate(
    rankings: Sequence[BaseRanking],
    method: str = "count",
    *,
    seed: int = 0,
    config: CEMCConfig | None = None,
    cap: int = DEFAULT_EXACT_CAP,
) -> AggregatedRanking:
    """Dispatch to one of the aggregators in :data:`METHODS`."""
    if method == "count":
        return aggregate_count(rankings)
    if method == "kemeny":
        return aggregate_kemeny_exact(rankings, cap=cap)
    if method == "cemc":
        return aggregate_cemc(rankings, config, seed)
    raise ValueError(f"unknown aggregation method {method!r}; expected one of {METHODS}")
