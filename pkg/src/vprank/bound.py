"""
Monte Carlo checks of the majority-vote error bound and of consistency.

With ``T`` independent base rankers that each misorder a given pair with
probability ``r = 1/2 - eps``, the majority verdict on that pair is wrong
with probability at most ``exp(-2 eps^2 T)`` (Hoeffding). The simulators
here estimate that probability, and the rate at which majority verdicts
over many items fail to be transitive, from seeded synthetic rankers.

Trials are processed in fixed-size chunks; chunk ``c`` draws from the
substream ``(seed, c)``. Chunk sizes depend only on the configuration, so
results are identical for any number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations
from typing import Callable, Sequence

import numpy as np

from .core import derive_seed, make_rng

__all__ = [
    "SyntheticRankerConfig",
    "BoundReport",
    "SwapModel",
    "hoeffding_bound",
    "simulate_pairwise_error",
    "calibrate_swap_model",
    "corrupt_rankings",
    "intransitive_fraction",
    "simulate_consistency",
    "bound_grid",
]


def hoeffding_bound(epsilon: float, T: int) -> float:
    """Upper bound ``exp(-2 eps^2 T)`` on the majority error for one pair."""
    if not 0.0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 1/2), got {epsilon}")
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    return math.exp(-2.0 * epsilon * epsilon * T)


@dataclass(frozen=True)
class SyntheticRankerConfig:
    """Synthetic base rankers with a controlled pairwise error rate.

    Give ``error_rate`` or ``epsilon`` (or both); a missing one is derived
    from ``error_rate = 1/2 - epsilon``.
    """

    T: int
    trials: int
    seed: int = 0
    error_rate: float | None = None
    epsilon: float | None = None

    def __post_init__(self) -> None:
        if self.error_rate is None and self.epsilon is None:
            raise ValueError("either error_rate or epsilon must be given")
        if self.epsilon is not None and not 0.0 < self.epsilon < 0.5:
            raise ValueError(f"epsilon must lie in (0, 1/2), got {self.epsilon}")
        r = self.rate
        if not 0.0 <= r < 0.5:
            raise ValueError(f"error rate must lie in [0, 1/2), got {r}")
        if self.error_rate is not None and self.epsilon is not None and r > 0.5 - self.epsilon + 1e-12:
            raise ValueError(f"error rate {r} exceeds 1/2 - epsilon = {0.5 - self.epsilon}")
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")

    @property
    def rate(self) -> float:
        return 0.5 - self.epsilon if self.error_rate is None else float(self.error_rate)

    @property
    def eps(self) -> float:
        return 0.5 - self.error_rate if self.epsilon is None else float(self.epsilon)


@dataclass(frozen=True)
class BoundReport:
    epsilon: float
    T: int
    error_rate: float
    trials: int
    empirical_error: float
    theoretical_bound: float
    stderr: float

    def holds(self, sigmas: float = 3.0) -> bool:
        return self.empirical_error <= self.theoretical_bound + sigmas * self.stderr

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "T": self.T,
            "error_rate": self.error_rate,
            "trials": self.trials,
            "empirical_error": self.empirical_error,
            "theoretical_bound": self.theoretical_bound,
            "stderr": self.stderr,
            "holds": self.holds(),
        }


def _chunks(trials: int, size: int) -> list[tuple[int, int]]:
    return [(c, min(size, trials - lo)) for c, lo in enumerate(range(0, trials, size))]


def _run_chunks(fn: Callable[[int, int], int], chunks: Sequence[tuple[int, int]], workers: int) -> int:
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    if workers == 1 or len(chunks) <= 1:
        return sum(fn(c, m) for c, m in chunks)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return sum(pool.map(lambda cm: fn(*cm), chunks))


def simulate_pairwise_error(config: SyntheticRankerConfig, workers: int = 1) -> BoundReport:
    """Estimate how often a strict majority of ``T`` noisy votes gets a pair wrong.

    Each trial draws ``T`` independent votes, each wrong with probability
    ``config.rate``. The verdict is correct only if strictly more than
    ``T/2`` votes are correct, so an exact tie counts as an error.
    """
    r, T = config.rate, config.T
    bound = hoeffding_bound(config.eps, T)
    size = max(1, min(4096, (1 << 21) // T))

    def chunk(c: int, m: int) -> int:
        wrong = np.count_nonzero(make_rng(config.seed, c).random((m, T)) < r, axis=1)
        return int(np.count_nonzero(2 * (T - wrong) <= T))

    failures = _run_chunks(chunk, _chunks(config.trials, size), workers)
    p = failures / config.trials
    stderr = math.sqrt(p * (1.0 - p) / config.trials)
    return BoundReport(config.eps, T, r, config.trials, p, bound, stderr)


def bound_grid(
    epsilons: Sequence[float],
    t_values: Sequence[int],
    trials: int,
    seed: int = 0,
    workers: int = 1,
) -> list[BoundReport]:
    """Run :func:`simulate_pairwise_error` over an ``(eps, T)`` grid.

    Grid point ``g`` (row-major) uses substream ``g`` of ``seed``.
    """
    reports = []
    for g, (eps, t) in enumerate((e, t) for e in epsilons for t in t_values):
        cfg = SyntheticRankerConfig(T=int(t), trials=trials, seed=derive_seed(seed, g), epsilon=float(eps))
        reports.append(simulate_pairwise_error(cfg, workers))
    return reports


# --- consistency -----------------------------------------------------------


@dataclass(frozen=True)
class SwapModel:
    """Corruption by ``passes`` odd-even sweeps of random adjacent swaps.

    A sweep first visits the disjoint pairs of positions ``(0,1), (2,3), ...``
    and then ``(1,2), (3,4), ...``, swapping each with probability
    ``swap_prob``.
    """

    n: int
    passes: int
    swap_prob: float

    def pair_error(self) -> float:
        return _mean_pair_error(self.n, self.passes, self.swap_prob)


def _sweep_pairs(n: int) -> list[int]:
    return list(range(0, n - 1, 2)) + list(range(1, n - 1, 2))


def _pair_swap(joint: np.ndarray, k: int, p: float) -> np.ndarray:
    swapped = joint.copy()
    swapped[..., [k, k + 1], :] = swapped[..., [k + 1, k], :]
    swapped[..., [k, k + 1]] = swapped[..., [k + 1, k]]
    return (1.0 - p) * joint + p * swapped


def _initial_joint(n: int) -> np.ndarray:
    # joint[a, b, pa, pb]: probability that item a sits at pa and item b at pb
    joint = np.zeros((n, n, n, n))
    a, b = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    joint[a, b, a, b] = 1.0
    return joint


def _pair_error_of(joint: np.ndarray) -> float:
    n = joint.shape[0]
    below = np.tril(np.ones((n, n), dtype=bool), -1)  # pa > pb
    inverted = (joint * below).sum(axis=(2, 3))
    iu = np.triu_indices(n, 1)
    return float(inverted[iu].mean())


def _mean_pair_error(n: int, passes: int, p: float) -> float:
    """Exact average probability that a pair ends up inverted."""
    joint = _initial_joint(n)
    for _ in range(passes):
        for k in _sweep_pairs(n):
            joint = _pair_swap(joint, k, p)
    return _pair_error_of(joint)


@lru_cache(maxsize=128)
def calibrate_swap_model(n: int, error_rate: float, max_passes: int = 10_000) -> SwapModel:
    """Pick the sweep count and swap probability giving mean pair error ``error_rate``.

    Uses the fewest sweeps that can reach the target at ``swap_prob = 1/2``
    and then bisects the swap probability. Pair errors are computed exactly
    by propagating the joint position distribution of every item pair.
    """
    if n < 2:
        raise ValueError(f"need at least 2 items, got {n}")
    if not 0.0 <= error_rate < 0.5:
        raise ValueError(f"error rate must lie in [0, 1/2), got {error_rate}")
    if error_rate == 0.0:
        return SwapModel(n, 0, 0.0)
    joint = _initial_joint(n)
    passes = 0
    while _pair_error_of(joint) < error_rate:
        passes += 1
        if passes > max_passes:
            raise ValueError(f"error rate {error_rate} is not reachable within {max_passes} sweeps")
        for k in _sweep_pairs(n):
            joint = _pair_swap(joint, k, 0.5)
    lo, hi = 0.0, 0.5
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if _mean_pair_error(n, passes, mid) < error_rate:
            lo = mid
        else:
            hi = mid
    return SwapModel(n, passes, 0.5 * (lo + hi))


def corrupt_rankings(model: SwapModel, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` corrupted copies of the ranking ``0, 1, ..., n-1``.

    Returns an ``(count, n)`` array with the item at each position.
    """
    n = model.n
    out = np.tile(np.arange(n, dtype=np.int16), (count, 1))
    if model.passes == 0 or model.swap_prob == 0.0:
        return out
    groups = [np.arange(0, n - 1, 2), np.arange(1, n - 1, 2)]
    for _ in range(model.passes):
        for left in groups:
            if left.size == 0:
                continue
            flip = rng.random((count, left.size)) < model.swap_prob
            a, b = out[:, left], out[:, left + 1]
            out[:, left] = np.where(flip, b, a)
            out[:, left + 1] = np.where(flip, a, b)
    return out


@lru_cache(maxsize=16)
def _triple_axes() -> tuple[tuple[int, ...], ...]:
    return tuple((0,) + tuple(1 + i for i in p) for p in permutations(range(3)))


def intransitive_fraction(verdicts: np.ndarray) -> np.ndarray:
    """Per-instance fraction of item triples whose majority verdicts are intransitive.

    Args:
        verdicts: Boolean ``(m, n, n)`` array, ``verdicts[:, a, b]`` true when
            ``a`` beats ``b`` by strict majority.

    A triple is intransitive when some ordering ``a, b, c`` of it has
    ``a > b`` and ``b > c`` but not ``a > c``.
    """
    y = np.asarray(verdicts, dtype=bool)
    m, n, _ = y.shape
    if n < 3:
        return np.zeros(m)
    viol = y[:, :, :, None] & y[:, None, :, :] & ~y[:, :, None, :]
    bad = np.zeros_like(viol)
    for axes in _triple_axes():
        bad |= viol.transpose(axes)
    i, j, k = np.array([t for t in _triples(n)]).T
    return bad[:, i, j, k].mean(axis=1)


def _triples(n: int):
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                yield i, j, k


def simulate_consistency(N: int, config: SyntheticRankerConfig, workers: int = 1) -> float:
    """Mean fraction of intransitive triples among majority verdicts.

    Each trial corrupts the ranking ``0..N-1`` ``T`` times with a
    :class:`SwapModel` calibrated to ``config.rate``, tallies pairwise
    counts, and checks every item triple for a transitivity violation.
    """
    if N < 3:
        raise ValueError(f"N must be >= 3, got {N}")
    model = calibrate_swap_model(N, config.rate)
    T = config.T
    size = max(1, min(config.trials, (1 << 21) // (T * N * N)))

    def chunk(c: int, m: int) -> float:
        rng = make_rng(config.seed, c)
        ranks = corrupt_rankings(model, m * T, rng).reshape(m, T, N)
        pos = np.argsort(ranks, axis=2)
        counts = (pos[:, :, :, None] < pos[:, :, None, :]).sum(axis=1)
        frac = intransitive_fraction(2 * counts > T)
        return float(frac.sum())

    chunks = _chunks(config.trials, size)
    if workers == 1 or len(chunks) <= 1:
        parts = [chunk(c, m) for c, m in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda cm: chunk(*cm), chunks))
    total = 0.0
    for part in parts:  # fixed reduction order
        total += part
    return total / config.trials
