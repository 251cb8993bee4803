"""
Per-frame probe-to-gallery distances and base ranking lists.

Each probe frame acts as its own ranker: it scores every gallery video by
the distance to that video's closest frame and sorts the gallery by that
score, nearest first. Running this for every frame of a probe video yields
the ensemble of base rankings that :mod:`vprank.aggregate` fuses.

All distances go through a single kernel (:func:`frame_distances`), so a
scalar call, a per-video call and a whole-dataset batch produce bitwise
identical numbers and therefore identical rankings.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .core import Dataset, FrameEmbedding, VideoSequence

__all__ = [
    "DistanceMode",
    "BaseRanking",
    "FrameGalleryDistances",
    "euclidean",
    "frame_distances",
    "frame_to_video_distance",
    "video_distances",
    "frame_gallery_distances",
    "base_ranking",
    "all_base_rankings",
    "dataset_base_rankings",
]


class DistanceMode(str, enum.Enum):
    """How frame-to-frame distances reduce to one frame-to-video distance."""

    MIN = "min"
    MEAN = "mean"


@dataclass(frozen=True, eq=False)
class BaseRanking:
    """A permutation of gallery indices, most similar first."""

    order: np.ndarray

    def __post_init__(self) -> None:
        order = np.array(self.order, dtype=np.int64, copy=True)
        if order.ndim != 1 or order.size == 0:
            raise ValueError(f"ranking must be a non-empty 1-D sequence, got shape {order.shape}")
        if not np.array_equal(np.sort(order), np.arange(order.size)):
            raise ValueError(f"ranking is not a permutation of 0..{order.size - 1}: {order.tolist()}")
        order.setflags(write=False)
        object.__setattr__(self, "order", order)

    @property
    def size(self) -> int:
        return int(self.order.size)

    def positions(self) -> np.ndarray:
        """Inverse permutation: ``positions()[j]`` is the 0-based rank of gallery ``j``."""
        pos = np.empty_like(self.order)
        pos[self.order] = np.arange(self.order.size)
        return pos

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BaseRanking):
            return NotImplemented
        return np.array_equal(self.order, other.order)

    def __hash__(self) -> int:
        return hash(self.order.tobytes())

    def __repr__(self) -> str:
        return f"BaseRanking({self.order.tolist()})"


@dataclass(frozen=True)
class FrameGalleryDistances:
    """Distances from frame ``frame_index`` of probe ``probe_index`` to each gallery video."""

    probe_index: int
    frame_index: int
    distances: np.ndarray


def _mode(mode) -> DistanceMode:
    try:
        return DistanceMode(mode)
    except ValueError:
        raise ValueError(f"unknown distance mode {mode!r}; expected 'min' or 'mean'") from None


def _vector(x) -> np.ndarray:
    if isinstance(x, FrameEmbedding):
        return x.values
    return FrameEmbedding(x).values


def frame_distances(probe_frames: np.ndarray, gallery_frames: np.ndarray) -> np.ndarray:
    """Euclidean distances between every row of two ``(n, D)`` arrays.

    Every entry is computed independently, so any row or column split of
    the inputs reproduces the same values bit for bit.
    """
    probe_frames = np.atleast_2d(np.asarray(probe_frames, dtype=np.float64))
    gallery_frames = np.atleast_2d(np.asarray(gallery_frames, dtype=np.float64))
    if probe_frames.shape[1] != gallery_frames.shape[1]:
        raise ValueError(
            f"dimension mismatch: probe frames have D={probe_frames.shape[1]}, "
            f"gallery frames have D={gallery_frames.shape[1]}"
        )
    return cdist(probe_frames, gallery_frames, "euclidean")


def euclidean(a, b) -> float:
    """L2 distance between two frame embeddings of the same dimension."""
    return float(frame_distances(_vector(a)[None, :], _vector(b)[None, :])[0, 0])


def _reduce(block: np.ndarray, mode: DistanceMode) -> np.ndarray:
    # block: (T, frames of one gallery video)
    if mode is DistanceMode.MIN:
        return block.min(axis=1)
    return block.mean(axis=1)


def frame_to_video_distance(probe_frame, gallery_seq: VideoSequence, mode=DistanceMode.MIN) -> float:
    """Distance from one probe frame to a gallery video.

    ``MIN`` takes the closest gallery frame; ``MEAN`` averages over all of
    the video's frames.
    """
    mode = _mode(mode)
    if gallery_seq.length == 0:
        raise ValueError("gallery video has no frames")
    block = frame_distances(_vector(probe_frame)[None, :], gallery_seq.frames)
    return float(_reduce(block, mode)[0])


def _gallery_layout(gallery: Sequence[VideoSequence]) -> tuple[np.ndarray, np.ndarray]:
    if len(gallery) == 0:
        raise ValueError("gallery must contain at least one video")
    stacked = np.concatenate([v.frames for v in gallery], axis=0)
    bounds = np.cumsum([0] + [v.length for v in gallery])
    return stacked, bounds


def _video_distances(probe_frames: np.ndarray, stacked: np.ndarray, bounds: np.ndarray, mode: DistanceMode) -> np.ndarray:
    dist = frame_distances(probe_frames, stacked)
    out = np.empty((dist.shape[0], bounds.size - 1), dtype=np.float64)
    for j in range(bounds.size - 1):
        out[:, j] = _reduce(dist[:, bounds[j] : bounds[j + 1]], mode)
    return out


def video_distances(probe_frames, gallery: Sequence[VideoSequence], mode=DistanceMode.MIN) -> np.ndarray:
    """Matrix of frame-to-video distances, shape ``(T, N)``.

    Args:
        probe_frames: ``(T, D)`` array (or a :class:`VideoSequence`).
        gallery: The ``N`` gallery videos.
        mode: Frame-to-video reduction.
    """
    if isinstance(probe_frames, VideoSequence):
        probe_frames = probe_frames.frames
    stacked, bounds = _gallery_layout(gallery)
    return _video_distances(np.atleast_2d(probe_frames), stacked, bounds, _mode(mode))


def frame_gallery_distances(
    probe_seq: VideoSequence,
    gallery: Sequence[VideoSequence],
    mode=DistanceMode.MIN,
    probe_index: int = 0,
) -> list[FrameGalleryDistances]:
    dist = video_distances(probe_seq.frames, gallery, mode)
    return [FrameGalleryDistances(probe_index, t, row) for t, row in enumerate(dist)]


def _argsort_rows(dist: np.ndarray) -> list[BaseRanking]:
    # stable sort: equal distances keep ascending gallery index
    return [BaseRanking(row) for row in np.argsort(dist, axis=1, kind="stable")]


def base_ranking(probe_frame, gallery: Sequence[VideoSequence], mode=DistanceMode.MIN) -> BaseRanking:
    """Rank the gallery by increasing distance to a single probe frame."""
    return _argsort_rows(video_distances(_vector(probe_frame)[None, :], gallery, mode))[0]


def all_base_rankings(
    probe_seq: VideoSequence,
    gallery: Sequence[VideoSequence],
    mode=DistanceMode.MIN,
) -> list[BaseRanking]:
    """One base ranking per probe frame, in frame order."""
    return _argsort_rows(video_distances(probe_seq.frames, gallery, mode))


def dataset_base_rankings(dataset: Dataset, mode=DistanceMode.MIN, workers: int = 1) -> list[list[BaseRanking]]:
    """Base rankings for every probe video of ``dataset``.

    Probes are distributed over ``workers`` threads; each probe's distances
    are computed by the same per-pair kernel, so the output does not depend
    on the worker count.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    mode = _mode(mode)
    stacked, bounds = _gallery_layout(dataset.gallery)

    def run(probe: VideoSequence) -> list[BaseRanking]:
        return _argsort_rows(_video_distances(probe.frames, stacked, bounds, mode))

    if workers == 1 or len(dataset.probe) <= 1:
        return [run(p) for p in dataset.probe]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, dataset.probe))
