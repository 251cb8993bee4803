"""
Domain types and sequence manipulation.

A video is a stack of frame embeddings of shape ``(T, D)``. All containers
are immutable: arrays are copied to float64 and flagged read-only on
construction, so they can be shared freely between worker threads.

Randomness comes from Philox, a counter-based generator. Every stochastic
routine takes an explicit 64-bit seed and optionally a *stream* key
(a tuple of non-negative integers) that selects an independent substream,
which is what lets parallel work reproduce sequential results exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "INFINITE",
    "FrameEmbedding",
    "VideoSequence",
    "Dataset",
    "make_rng",
    "derive_seed",
    "shuffle",
    "shuffle_dataset",
    "subsample",
    "subsample_dataset",
    "parse_rate",
    "format_rate",
]

INFINITE = math.inf

_MAX_SEED = 2**64 - 1


def _check_seed(seed: int) -> int:
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed <= _MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Return a Philox generator for ``seed`` and the substream ``stream``.

    The same ``(seed, stream)`` pair always yields the same sequence, and
    distinct stream keys give statistically independent sequences.
    """
    seq = np.random.SeedSequence(entropy=_check_seed(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(seed: int, *stream: int) -> int:
    """Derive a child 64-bit seed from ``seed`` and a stream key."""
    seq = np.random.SeedSequence(entropy=_check_seed(seed), spawn_key=tuple(int(s) for s in stream))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _frozen(values, ndim: int, what: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"{what} must be {ndim}-dimensional, got shape {arr.shape}")
    if arr.size == 0 or arr.shape[-1] < 1:
        raise ValueError(f"{what} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FrameEmbedding:
    """Feature vector of a single frame (dimension ``D >= 1``, all finite)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _frozen(self.values, 1, "frame embedding"))

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FrameEmbedding):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash(self.values.tobytes())


@dataclass(frozen=True, eq=False)
class VideoSequence:
    """An ordered stack of frame embeddings for one identity seen by one camera.

    Attributes:
        identity: Opaque person label.
        camera: Opaque camera label.
        frames: Read-only float64 array of shape ``(T, D)``.
    """

    identity: str
    camera: str
    frames: np.ndarray

    def __post_init__(self) -> None:
        frames = self.frames
        if isinstance(frames, (list, tuple)) and frames and isinstance(frames[0], FrameEmbedding):
            dims = {f.dim for f in frames}
            if len(dims) != 1:
                raise ValueError(f"frames of one video must share a dimension, got {sorted(dims)}")
            frames = np.stack([f.values for f in frames])
        object.__setattr__(self, "frames", _frozen(frames, 2, "video frames"))
        object.__setattr__(self, "identity", str(self.identity))
        object.__setattr__(self, "camera", str(self.camera))

    @property
    def length(self) -> int:
        return int(self.frames.shape[0])

    @property
    def dim(self) -> int:
        return int(self.frames.shape[1])

    def frame(self, t: int) -> FrameEmbedding:
        return FrameEmbedding(self.frames[t])

    def __len__(self) -> int:
        return self.length

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VideoSequence):
            return NotImplemented
        return (
            self.identity == other.identity
            and self.camera == other.camera
            and np.array_equal(self.frames, other.frames)
        )

    def __hash__(self) -> int:
        return hash((self.identity, self.camera, self.frames.tobytes()))

    def __repr__(self) -> str:
        return f"VideoSequence(identity={self.identity!r}, camera={self.camera!r}, T={self.length}, D={self.dim})"


@dataclass(frozen=True)
class Dataset:
    """Probe and gallery videos sharing one embedding dimension."""

    probe: tuple[VideoSequence, ...]
    gallery: tuple[VideoSequence, ...]

    def __post_init__(self) -> None:
        probe = tuple(self.probe)
        gallery = tuple(self.gallery)
        if not gallery:
            raise ValueError("gallery must contain at least one video")
        dims = {v.dim for v in probe + gallery}
        if len(dims) != 1:
            raise ValueError(f"all videos must share one dimension, got {sorted(dims)}")
        object.__setattr__(self, "probe", probe)
        object.__setattr__(self, "gallery", gallery)

    @property
    def dim(self) -> int:
        return self.gallery[0].dim

    def truth(self) -> list[frozenset[int]]:
        """Gallery indices sharing each probe's identity.

        Raises:
            ValueError: If a probe identity has no gallery entry.
        """
        by_identity: dict[str, list[int]] = {}
        for j, video in enumerate(self.gallery):
            by_identity.setdefault(video.identity, []).append(j)
        out = []
        for i, video in enumerate(self.probe):
            if video.identity not in by_identity:
                raise ValueError(f"probe {i} identity {video.identity!r} does not appear in the gallery")
            out.append(frozenset(by_identity[video.identity]))
        return out


def shuffle(seq: VideoSequence, seed: int) -> VideoSequence:
    """Return ``seq`` with its frames in a seeded uniformly random order."""
    order = make_rng(seed).permutation(seq.length)
    return VideoSequence(seq.identity, seq.camera, seq.frames[order])


def shuffle_dataset(dataset: Dataset, seed: int) -> Dataset:
    """Shuffle the frames of every video, each with its own derived seed."""
    probe = [shuffle(v, derive_seed(seed, 0, i)) for i, v in enumerate(dataset.probe)]
    gallery = [shuffle(v, derive_seed(seed, 1, j)) for j, v in enumerate(dataset.gallery)]
    return Dataset(tuple(probe), tuple(gallery))


def _check_rate(k) -> float | int:
    if k == INFINITE:
        return INFINITE
    if isinstance(k, (bool, np.bool_)) or not isinstance(k, (int, np.integer)):
        raise TypeError(f"sample rate must be a positive integer or INFINITE, got {k!r}")
    if k < 1:
        raise ValueError(f"sample rate must be a positive integer or INFINITE, got {k}")
    return int(k)


def subsample(seq: VideoSequence, k) -> VideoSequence:
    """Keep one frame out of every ``k``, starting from the first.

    ``k=INFINITE`` keeps only the first frame, reducing video matching to
    single-image matching.
    """
    k = _check_rate(k)
    if k == 1:
        return seq
    frames = seq.frames[:1] if k == INFINITE else seq.frames[::k]
    return VideoSequence(seq.identity, seq.camera, frames)


def subsample_dataset(dataset: Dataset, k) -> Dataset:
    """Apply :func:`subsample` to every probe and gallery video."""
    k = _check_rate(k)
    if k == 1:
        return dataset
    return Dataset(
        tuple(subsample(v, k) for v in dataset.probe),
        tuple(subsample(v, k) for v in dataset.gallery),
    )


def parse_rate(text: str) -> float | int:
    """Parse a sample rate such as ``"10"`` or ``"inf"``."""
    text = text.strip().lower()
    if text in {"inf", "infinite", "infinity"}:
        return INFINITE
    try:
        value = int(text)
    except ValueError:
        raise ValueError(f"invalid sample rate {text!r}; expected a positive integer or 'inf'") from None
    return _check_rate(value)


def format_rate(k) -> str:
    return "inf" if k == INFINITE else str(int(k))

