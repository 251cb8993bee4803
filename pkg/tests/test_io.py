import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vprank.core import Dataset, VideoSequence
from vprank.io import (
    DatasetFormatError,
    SyntheticSpec,
    generate_synthetic,
    read_dataset,
    read_femb,
    read_manifest,
    read_videos,
    write_dataset,
    write_femb,
)
from vprank.pipeline import evaluate_dataset


def f32_video(rng, t, d, ident, cam):
    return VideoSequence(ident, cam, rng.normal(size=(t, d)).astype(np.float32).astype(np.float64))


def small_dataset(rng, t=3, d=4):
    return Dataset((f32_video(rng, t, d, "a", "c1"),), (f32_video(rng, t, d, "a", "c2"),))


class TestFemb:
    def test_byte_layout(self, tmp_path):
        frames = np.array([[1.0, -2.0], [0.5, 3.0], [0.0, 0.25]])
        path = tmp_path / "x.femb"
        write_femb(path, frames)
        data = path.read_bytes()
        assert data[:4] == b"FEMB"
        assert data[4:6] == b"\x01\x00"
        assert struct.unpack("<II", data[6:14]) == (3, 2)
        assert data[14:] == struct.pack("<6f", 1.0, -2.0, 0.5, 3.0, 0.0, 0.25)
        assert np.array_equal(read_femb(path), frames)
        assert read_femb(path).dtype == np.float64

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.femb"
        write_femb(path, np.zeros((2, 2)))
        data = bytearray(path.read_bytes())
        data[:4] = b"FEMX"
        path.write_bytes(bytes(data))
        with pytest.raises(DatasetFormatError, match="bad.femb.*magic"):
            read_femb(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "short.femb"
        write_femb(path, np.zeros((5, 3)))
        path.write_bytes(path.read_bytes()[: 14 + 4 * 3 * 4])
        with pytest.raises(DatasetFormatError, match="short.femb.*truncated.*5 frames.*holds 4"):
            read_femb(path)

    def test_trailing_bytes(self, tmp_path):
        path = tmp_path / "long.femb"
        write_femb(path, np.zeros((1, 1)))
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(DatasetFormatError, match="trailing"):
            read_femb(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "v.femb"
        path.write_bytes(struct.pack("<4sHII", b"FEMB", 2, 1, 1) + struct.pack("<f", 1.0))
        with pytest.raises(DatasetFormatError, match="version"):
            read_femb(path)

    def test_non_finite(self, tmp_path):
        path = tmp_path / "nan.femb"
        path.write_bytes(struct.pack("<4sHII", b"FEMB", 1, 1, 2) + struct.pack("<2f", 1.0, float("nan")))
        with pytest.raises(DatasetFormatError, match="non-finite"):
            read_femb(path)

    def test_header_mismatch(self, tmp_path):
        path = tmp_path / "m.femb"
        write_femb(path, np.zeros((2, 3)))
        with pytest.raises(DatasetFormatError, match="T=2"):
            read_femb(path, expect_frames=4)
        with pytest.raises(DatasetFormatError, match="D=3"):
            read_femb(path, expect_dim=5)

    def test_missing(self, tmp_path):
        with pytest.raises(DatasetFormatError, match="gone.femb"):
            read_femb(tmp_path / "gone.femb")


class TestDatasetFiles:
    def test_round_trip_bit_identical(self, tmp_path, rng):
        ds = Dataset(
            (f32_video(rng, 3, 4, "a", "c1"), f32_video(rng, 3, 4, "b", "c1")),
            (f32_video(rng, 3, 4, "a", "c2"), f32_video(rng, 3, 4, "b", "c2")),
        )
        manifest = write_dataset(ds, tmp_path / "one")
        back = read_dataset(tmp_path / "one" / "manifest.json")
        assert back == ds
        write_dataset(back, tmp_path / "two")
        for entry in manifest.videos:
            assert (tmp_path / "one" / entry.file).read_bytes() == (tmp_path / "two" / entry.file).read_bytes()
        assert (tmp_path / "one" / "manifest.json").read_bytes() == (tmp_path / "two" / "manifest.json").read_bytes()

    def test_manifest_schema(self, tmp_path, rng):
        write_dataset(small_dataset(rng), tmp_path)
        doc = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
        assert doc["version"] == "1" and doc["dim"] == 4
        assert doc["videos"][0] == {"identity": "a", "camera": "c1", "frames": 3, "file": "probe/0000.femb", "role": "probe"}
        assert read_manifest(tmp_path / "manifest.json").videos[1].role == "gallery"

    def test_roleless_entries_serve_both_roles(self, tmp_path):
        write_femb(tmp_path / "v.femb", np.ones((2, 2)))
        (tmp_path / "m.json").write_text(json.dumps(
            {"version": "1", "dim": 2, "videos": [{"identity": "a", "camera": "c", "frames": 2, "file": "v.femb"}]}
        ))
        assert len(read_videos(tmp_path / "m.json", "probe")) == 1
        ds = read_dataset(tmp_path / "m.json")
        assert len(ds.probe) == 1 and len(ds.gallery) == 1

    def test_manifest_frame_mismatch_names_file(self, tmp_path, rng):
        write_dataset(small_dataset(rng), tmp_path)
        doc = json.loads((tmp_path / "manifest.json").read_text())
        doc["videos"][1]["frames"] = 7
        (tmp_path / "manifest.json").write_text(json.dumps(doc))
        with pytest.raises(DatasetFormatError, match=r"gallery[/\\]0000\.femb"):
            read_dataset(tmp_path / "manifest.json")

    def test_manifest_dim_mismatch(self, tmp_path, rng):
        write_dataset(small_dataset(rng), tmp_path)
        doc = json.loads((tmp_path / "manifest.json").read_text())
        doc["dim"] = 5
        (tmp_path / "manifest.json").write_text(json.dumps(doc))
        with pytest.raises(DatasetFormatError, match="D=4"):
            read_dataset(tmp_path / "manifest.json")

    def test_missing_video_file(self, tmp_path, rng):
        write_dataset(small_dataset(rng), tmp_path)
        (tmp_path / "probe" / "0000.femb").unlink()
        with pytest.raises(DatasetFormatError, match="not found"):
            read_dataset(tmp_path / "manifest.json")

    @pytest.mark.parametrize("text", ["{", "[]", '{"version": "1", "dim": 2}', '{"version": "9", "dim": 2, "videos": []}'])
    def test_malformed_manifest(self, tmp_path, text):
        (tmp_path / "m.json").write_text(text)
        with pytest.raises(DatasetFormatError):
            read_manifest(tmp_path / "m.json")

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 4), t=st.integers(1, 5), d=st.integers(1, 6))
    def test_round_trip_property(self, tmp_path_factory, seed, n, t, d):
        rng = np.random.default_rng(seed)
        ds = Dataset(
            tuple(f32_video(rng, t, d, f"p{i}", "c1") for i in range(n)),
            tuple(f32_video(rng, int(rng.integers(1, 6)), d, f"p{i}", "c2") for i in range(n)),
        )
        out = tmp_path_factory.mktemp("rt")
        write_dataset(ds, out)
        assert read_dataset(out / "manifest.json") == ds


class TestSynthetic:
    def test_shape_and_labels(self):
        ds = generate_synthetic(SyntheticSpec(persons=4, frames_per_video=5, dim=3, seed=1))
        assert len(ds.probe) == len(ds.gallery) == 4
        assert all(v.camera == "cam1" and v.length == 5 and v.dim == 3 for v in ds.probe)
        assert all(v.camera == "cam2" for v in ds.gallery)
        assert [v.identity for v in ds.probe] == [v.identity for v in ds.gallery]
        assert ds.truth() == [frozenset({i}) for i in range(4)]

    def test_deterministic(self):
        spec = SyntheticSpec(persons=6, frames_per_video=4, dim=5, frame_noise=0.3, camera_shift=0.1, seed=7)
        assert generate_synthetic(spec) == generate_synthetic(spec)
        assert generate_synthetic(spec) != generate_synthetic(SyntheticSpec(6, 4, 5, frame_noise=0.3, camera_shift=0.1, seed=8))

    def test_centroids_on_sphere(self):
        ds = generate_synthetic(SyntheticSpec(persons=10, frames_per_video=1, dim=6, identity_separation=2.5, frame_noise=0.0))
        norms = np.linalg.norm(np.stack([v.frames[0] for v in ds.probe]), axis=1)
        assert np.allclose(norms, 2.5, atol=1e-5)

    def test_float32_representable(self):
        ds = generate_synthetic(SyntheticSpec(persons=3, frames_per_video=4, dim=4, frame_noise=0.7))
        for v in ds.probe + ds.gallery:
            assert np.array_equal(v.frames, v.frames.astype(np.float32).astype(np.float64))

    @pytest.mark.parametrize(
        "kw",
        [{"persons": 1}, {"frames_per_video": 0}, {"dim": 0}, {"frame_noise": -1.0}, {"identity_separation": -0.1}, {"cameras": 3}],
    )
    def test_invalid(self, kw):
        base = dict(persons=3, frames_per_video=2, dim=2)
        with pytest.raises(ValueError):
            SyntheticSpec(**(base | kw))

    def test_zero_noise_is_perfect(self):
        for seed in range(5):
            ds = generate_synthetic(SyntheticSpec(persons=20, frames_per_video=6, dim=8, frame_noise=0.0, seed=seed))
            assert evaluate_dataset(ds, "count", (1,)).cmc[1] == 1.0

    def test_zero_separation_is_chance(self):
        persons, seeds = 5, 300
        accs = [
            evaluate_dataset(generate_synthetic(SyntheticSpec(persons, 4, 4, identity_separation=0.0, frame_noise=1.0, seed=s)), "count", (1,)).cmc[1]
            for s in range(seeds)
        ]
        # per-query hit ~ Bernoulli(1/5); 1500 queries -> stderr ~ 0.0103
        assert abs(np.mean(accs) - 1 / persons) < 0.04

    def test_accuracy_non_increasing_in_noise(self):
        sigmas = [0.1, 0.3, 0.5, 0.8]
        means = []
        for sigma in sigmas:
            accs = [evaluate_dataset(generate_synthetic(SyntheticSpec(15, 4, 8, frame_noise=sigma, seed=s)), "count", (1,)).cmc[1] for s in range(20)]
            means.append(np.mean(accs))
        assert all(a >= b for a, b in zip(means, means[1:])), means
