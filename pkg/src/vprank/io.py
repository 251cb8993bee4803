"""
Embedding files, manifests, rankings output and synthetic datasets.

``.femb`` layout (all little-endian)::

    offset  size    field
    0       4       magic b"FEMB"
    4       2       format version, uint16 (= 1)
    6       4       T, uint32 (frames)
    10      4       D, uint32 (dimension)
    14      4*T*D   float32 values, frame-major

A manifest is a UTF-8 JSON document listing the videos of a dataset::

    {"version": "1", "dim": D,
     "videos": [{"identity": "p000", "camera": "cam1", "frames": T,
                 "file": "probe/0000.femb", "role": "probe"}, ...]}

``file`` is relative to the manifest's directory. ``role`` ("probe" or
"gallery") is optional; entries without it are usable in either role.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import Dataset, VideoSequence, make_rng

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "MANIFEST_VERSION",
    "DatasetFormatError",
    "VideoEntry",
    "Manifest",
    "SyntheticSpec",
    "write_femb",
    "read_femb",
    "write_dataset",
    "read_manifest",
    "read_videos",
    "read_dataset",
    "generate_synthetic",
    "dump_json",
    "read_rankings",
    "rankings_document",
    "truth_from_identities",
]

MAGIC = b"FEMB"
FORMAT_VERSION = 1
MANIFEST_VERSION = "1"
_HEADER = struct.Struct("<4sHII")
ROLES = ("probe", "gallery")


class DatasetFormatError(ValueError):
    """A dataset file or manifest is malformed; the message names the file."""


@dataclass(frozen=True)
class VideoEntry:
    identity: str
    camera: str
    frames: int
    file: str
    role: str | None = None

    def to_dict(self) -> dict:
        out = {"identity": self.identity, "camera": self.camera, "frames": self.frames, "file": self.file}
        if self.role is not None:
            out["role"] = self.role
        return out


@dataclass(frozen=True)
class Manifest:
    version: str
    dim: int
    videos: tuple[VideoEntry, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {"version": self.version, "dim": self.dim, "videos": [v.to_dict() for v in self.videos]}


def write_femb(path: str | Path, frames: np.ndarray) -> None:
    """Write a ``(T, D)`` array as a ``.femb`` file (values stored as float32)."""
    frames = np.asarray(frames)
    if frames.ndim != 2:
        raise ValueError(f"frames must be 2-D, got shape {frames.shape}")
    t, d = frames.shape
    payload = frames.astype("<f4", copy=False).tobytes(order="C")
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, t, d))
            fh.write(payload)
    except OSError as exc:
        raise OSError(f"cannot write embedding file {path}: {exc}") from exc


def read_femb(path: str | Path, expect_frames: int | None = None, expect_dim: int | None = None) -> np.ndarray:
    """Read a ``.femb`` file into a float64 ``(T, D)`` array.

    Raises:
        DatasetFormatError: Bad magic or version, header/manifest mismatch,
            truncated or oversized payload, or non-finite values.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise DatasetFormatError(f"{path}: embedding file not found") from None
    except OSError as exc:
        raise DatasetFormatError(f"{path}: cannot read embedding file: {exc}") from exc
    if len(data) < _HEADER.size:
        raise DatasetFormatError(f"{path}: file too short for a FEMB header ({len(data)} bytes)")
    magic, version, t, d = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: unsupported format version {version}")
    if t < 1 or d < 1:
        raise DatasetFormatError(f"{path}: header declares T={t}, D={d}; both must be >= 1")
    if expect_frames is not None and t != expect_frames:
        raise DatasetFormatError(f"{path}: header declares T={t} but manifest says {expect_frames}")
    if expect_dim is not None and d != expect_dim:
        raise DatasetFormatError(f"{path}: header declares D={d} but manifest says {expect_dim}")
    expected = _HEADER.size + 4 * t * d
    if len(data) < expected:
        held = (len(data) - _HEADER.size) // (4 * d)
        raise DatasetFormatError(f"{path}: truncated payload, header declares {t} frames but file holds {held}")
    if len(data) > expected:
        raise DatasetFormatError(f"{path}: {len(data) - expected} unexpected trailing bytes")
    values = np.frombuffer(data, dtype="<f4", count=t * d, offset=_HEADER.size).astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise DatasetFormatError(f"{path}: payload contains non-finite values")
    return values.reshape(t, d)


def write_dataset(dataset: Dataset, directory: str | Path) -> Manifest:
    """Write every video as ``.femb`` plus ``manifest.json`` under ``directory``.

    Values are stored as float32, so the round trip is exact for datasets
    whose values are float32-representable (synthetic datasets are).
    """
    directory = Path(directory)
    entries = []
    for role, videos in (("probe", dataset.probe), ("gallery", dataset.gallery)):
        sub = directory / role
        try:
            sub.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create directory {sub}: {exc}") from exc
        for i, video in enumerate(videos):
            rel = f"{role}/{i:04d}.femb"
            write_femb(directory / rel, video.frames)
            entries.append(VideoEntry(video.identity, video.camera, video.length, rel, role))
    manifest = Manifest(MANIFEST_VERSION, dataset.dim, tuple(entries))
    path = directory / "manifest.json"
    try:
        path.write_text(dump_json(manifest.to_dict()), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write manifest {path}: {exc}") from exc
    return manifest


def read_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DatasetFormatError(f"{path}: manifest not found") from None
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"{path}: cannot parse manifest: {exc}") from exc
    try:
        version = str(doc["version"])
        dim = int(doc["dim"])
        entries = []
        for k, v in enumerate(doc["videos"]):
            role = v.get("role")
            if role is not None and role not in ROLES:
                raise DatasetFormatError(f"{path}: video {k} has unknown role {role!r}")
            entries.append(VideoEntry(str(v["identity"]), str(v["camera"]), int(v["frames"]), str(v["file"]), role))
    except DatasetFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"{path}: malformed manifest field: {exc!r}") from exc
    if version != MANIFEST_VERSION:
        raise DatasetFormatError(f"{path}: unsupported manifest version {version!r}")
    if dim < 1:
        raise DatasetFormatError(f"{path}: dim must be >= 1, got {dim}")
    return Manifest(version, dim, tuple(entries))


def read_videos(manifest_path: str | Path, role: str | None = None) -> list[VideoSequence]:
    """Load the videos of a manifest, optionally only those usable as ``role``."""
    manifest_path = Path(manifest_path)
    manifest = read_manifest(manifest_path)
    base = manifest_path.parent
    out = []
    for entry in manifest.videos:
        if role is not None and entry.role not in (None, role):
            continue
        frames = read_femb(base / entry.file, entry.frames, manifest.dim)
        out.append(VideoSequence(entry.identity, entry.camera, frames))
    return out


def read_dataset(manifest_path: str | Path) -> Dataset:
    """Load a dataset manifest; entries are split by their ``role`` field."""
    try:
        return Dataset(tuple(read_videos(manifest_path, "probe")), tuple(read_videos(manifest_path, "gallery")))
    except DatasetFormatError:
        raise
    except ValueError as exc:
        raise DatasetFormatError(f"{manifest_path}: {exc}") from exc


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a two-camera synthetic re-identification dataset.

    Identity centroids lie on a sphere of radius ``identity_separation``;
    each camera adds its own offset of norm ``camera_shift`` to every
    centroid, and each frame adds isotropic Gaussian noise of standard
    deviation ``frame_noise``.
    """

    persons: int
    frames_per_video: int
    dim: int
    identity_separation: float = 1.0
    frame_noise: float = 0.5
    seed: int = 0
    camera_shift: float = 0.0
    cameras: int = 2

    def __post_init__(self) -> None:
        if self.persons < 2:
            raise ValueError(f"persons must be >= 2, got {self.persons}")
        if self.frames_per_video < 1:
            raise ValueError(f"frames_per_video must be >= 1, got {self.frames_per_video}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if not self.identity_separation >= 0.0:
            raise ValueError(f"identity_separation must be >= 0, got {self.identity_separation}")
        if not self.frame_noise >= 0.0:
            raise ValueError(f"frame_noise must be >= 0, got {self.frame_noise}")
        if not self.camera_shift >= 0.0:
            raise ValueError(f"camera_shift must be >= 0, got {self.camera_shift}")
        if self.cameras != 2:
            raise ValueError(f"synthetic datasets have exactly 2 cameras, got {self.cameras}")


def _unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    v = rng.standard_normal((n, d))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return v / norms


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Draw a probe (camera 1) and gallery (camera 2) video per person.

    The result only depends on ``spec``; values are rounded to float32 so
    the dataset survives a ``.femb`` round trip unchanged.
    """
    rng = make_rng(spec.seed)
    n, t, d = spec.persons, spec.frames_per_video, spec.dim
    centroids = spec.identity_separation * _unit_rows(rng, n, d)
    shifts = spec.camera_shift * _unit_rows(rng, 2, d)
    noise = rng.standard_normal((2, n, t, d))
    videos: list[list[VideoSequence]] = [[], []]
    for cam in range(2):
        frames = centroids[:, None, :] + shifts[cam] + spec.frame_noise * noise[cam]
        frames = frames.astype(np.float32).astype(np.float64)
        for i in range(n):
            videos[cam].append(VideoSequence(f"p{i:03d}", f"cam{cam + 1}", frames[i]))
    return Dataset(tuple(videos[0]), tuple(videos[1]))


def dump_json(doc) -> str:
    """Canonical JSON text (sorted keys, 2-space indent, trailing newline)."""
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def read_rankings(path: str | Path) -> dict:
    """Parse a rankings document written by ``vprank rank``."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DatasetFormatError(f"{path}: rankings file not found") from None
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"{path}: cannot parse rankings: {exc}") from exc
    if not isinstance(doc, dict) or "queries" not in doc or "gallery" not in doc:
        raise DatasetFormatError(f"{path}: not a rankings document (missing 'queries' or 'gallery')")
    return doc


def rankings_document(
    dataset: Dataset,
    consensus: Sequence,
    *,
    method: str,
    params: dict,
    seed: int,
    distance: str,
    k: str,
) -> dict:
    """Build the rankings JSON document for ``consensus`` (one per probe)."""
    queries = []
    for i, (probe, agg) in enumerate(zip(dataset.probe, consensus)):
        queries.append(
            {
                "probe_index": i,
                "identity": probe.identity,
                "camera": probe.camera,
                "frames": probe.length,
                "order": agg.order.tolist(),
                "scores": agg.scores.tolist(),
            }
        )
    return {
        "format": "vprank-rankings",
        "version": 1,
        "method": method,
        "params": params,
        "seed": seed,
        "distance": distance,
        "k": k,
        "gallery": [{"identity": g.identity, "camera": g.camera} for g in dataset.gallery],
        "queries": queries,
    }


def truth_from_identities(probe_ids: Iterable[str], gallery_ids: Sequence[str]) -> list[frozenset[int]]:
    index: dict[str, list[int]] = {}
    for j, ident in enumerate(gallery_ids):
        index.setdefault(ident, []).append(j)
    out = []
    for i, ident in enumerate(probe_ids):
        if ident not in index:
            raise ValueError(f"probe {i} identity {ident!r} does not appear in the gallery")
        out.append(frozenset(index[ident]))
    return out
