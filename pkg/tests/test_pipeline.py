import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vprank.core import INFINITE, Dataset, VideoSequence, shuffle_dataset
from vprank.io import SyntheticSpec, generate_synthetic
from vprank.pipeline import consensus_rankings, evaluate_dataset


def synth(seed, persons=6, frames=8, dim=4, noise=0.6):
    return generate_synthetic(SyntheticSpec(persons, frames, dim, frame_noise=noise, seed=seed))


@settings(max_examples=15, deadline=None)
@given(data_seed=st.integers(0, 2**32 - 1), shuffle_seed=st.integers(0, 2**64 - 1), method=st.sampled_from(["count", "kemeny", "cemc"]))
def test_frame_order_invariance(data_seed, shuffle_seed, method):
    ds = synth(data_seed)
    a = consensus_rankings(ds, method, seed=4)
    b = consensus_rankings(shuffle_dataset(ds, shuffle_seed), method, seed=4)
    assert all(np.array_equal(x.order, y.order) for x, y in zip(a, b))


def test_infinite_k_is_single_image_matching():
    ds = synth(3, persons=10, frames=12)
    got = consensus_rankings(ds, "count", k=INFINITE)
    first_gallery = np.stack([g.frames[0] for g in ds.gallery])
    for probe, agg in zip(ds.probe, got):
        d = np.sqrt(((first_gallery - probe.frames[0]) ** 2).sum(axis=1))
        assert agg.order.tolist() == np.argsort(d, kind="stable").tolist()


@pytest.mark.parametrize("method", ["count", "kemeny", "cemc"])
def test_workers_do_not_change_results(method):
    ds = synth(5)
    assert consensus_rankings(ds, method, workers=1) == consensus_rankings(ds, method, workers=4)


def test_mean_mode_runs():
    res = evaluate_dataset(synth(1), "count", (1, 3), mode="mean")
    assert 0.0 <= res.cmc[1] <= res.cmc[3] <= 1.0


def test_multi_match_gallery():
    v = lambda ident, cam, x: VideoSequence(ident, cam, [[x, 0.0], [x + 0.1, 0.0]])
    ds = Dataset(
        (v("a", "c1", 0.0), v("b", "c1", 5.0)),
        (v("a", "c2", 0.2), v("b", "c2", 5.2), v("a", "c3", -0.3)),
    )
    res = evaluate_dataset(ds, "kemeny", (1, 2))
    assert ds.truth() == [frozenset({0, 2}), frozenset({1})]
    assert res.cmc[1] == 1.0
    assert res.map_score == 1.0
