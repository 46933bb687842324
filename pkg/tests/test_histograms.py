import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_rgb
from fcid.channels import ChannelConfig, Plane, extract_channel_planes
from fcid.histograms import (
    BIN_SWEEP,
    CHANNELS,
    DistinctiveBins,
    HistConfig,
    Histogram,
    bin_indices,
    class_distributions,
    distinctive_bins,
    hist_feature,
    most_distinctive_bin,
    normalized_histogram,
    total_variation,
    write_histdump,
)
from oracles import recount_histogram


def test_point_mass():
    h = normalized_histogram(Plane(np.zeros((5, 5)), 0.0, 1.0), 200)
    assert h.bins[0] == 1.0 and h.bins[1:].sum() == 0.0


def test_direct_binning():
    h = normalized_histogram(Plane(np.array([[0.1, 0.1, 0.6, 0.9]]), 0.0, 1.0), 10)
    expected = np.zeros(10)
    expected[[1, 6, 9]] = [0.5, 0.25, 0.25]
    assert np.array_equal(h.bins, expected)


def test_top_of_range_lands_in_last_bin():
    h = normalized_histogram(Plane(np.array([[255.0, 0.0]]), 0.0, 255.0), 200)
    assert h.bins[-1] == 0.5 and h.bins[0] == 0.5


@pytest.mark.parametrize("pixel, k, expected", [
    ((1, 42, 51), 200, 106),   # hue exactly 0.53
    ((1, 126, 81), 200, 88),   # hue exactly 0.44
    ((2, 84, 102), 220, 116),  # 116.6, well inside a bin
])
def test_exact_hue_edges_land_in_upper_bin(pixel, k, expected):
    from fcid.channels import rgb_to_hsv

    h, _, _ = rgb_to_hsv(pixel)
    assert bin_indices(np.array([h]), k, 0.0, 1.0)[0] == expected


def test_empty_plane_rejected():
    with pytest.raises(ValueError, match="empty input plane"):
        normalized_histogram(Plane(np.zeros((0, 3)), 0.0, 1.0), 10)


def test_random_planes_sum_to_one(rng):
    for _ in range(100):
        shape = tuple(rng.integers(1, 40, size=2))
        k = int(rng.integers(2, 300))
        h = normalized_histogram(Plane(rng.random(shape), 0.0, 1.0), k)
        assert abs(h.bins.sum() - 1.0) <= 1e-9
        assert np.all(h.bins >= 0)


def test_histogram_matches_recount(rng):
    v = rng.integers(0, 256, size=(13, 11)).astype(float)
    for k in (2, 7, 200, 256):
        assert np.allclose(normalized_histogram(Plane(v, 0, 255), k).bins, recount_histogram(v, k, 0, 255),
                           atol=0, rtol=0)


@pytest.mark.parametrize("n, f, expected", [
    ([0.5, 0.5, 0.0], [0.2, 0.4, 0.4], 2),
    ([0.3, 0.3, 0.4], [0.3, 0.3, 0.4], 0),
    ([1.0, 0.0], [0.0, 1.0], 0),
])
def test_most_distinctive_bin(n, f, expected):
    assert most_distinctive_bin(np.array(n), np.array(f)) == expected
    assert most_distinctive_bin(np.array(f), np.array(n)) == expected


def test_most_distinctive_bin_mismatch():
    with pytest.raises(ValueError):
        most_distinctive_bin(np.ones(3) / 3, np.ones(4) / 4)


@pytest.mark.parametrize("bins, expected", [
    ([0.25] * 4, 0.0),
    ([1.0, 0.0, 0.0, 0.0], 1.0),
    ([0.1, 0.3, 0.2, 0.4], 0.5),
])
def test_total_variation(bins, expected):
    assert total_variation(np.array(bins)) == pytest.approx(expected, abs=1e-15)


@given(arrays(np.float64, st.integers(2, 60), elements=st.floats(0, 1)))
@settings(max_examples=100)
def test_total_variation_bounds(raw):
    if raw.sum() == 0:
        raw = np.ones_like(raw)
    h = raw / raw.sum()
    tv = total_variation(h)
    assert -1e-12 <= tv <= 2.0 + 1e-12
    assert (tv == 0) == bool(np.all(h == h[0]))


def _planes(rng, n, radius=1):
    return [extract_channel_planes(random_rgb(rng, max_side=10), ChannelConfig(radius)) for _ in range(n)]


def test_identical_pools_give_identical_distributions(rng):
    p = _planes(rng, 1)[0]
    d = class_distributions([p, p], [-1, 1], HistConfig.uniform(50))
    for ch in CHANNELS:
        assert np.array_equal(d.natural[ch].bins, d.fake[ch].bins)


def test_pooling_is_pixel_weighted_mean(rng):
    a, b, f = _planes(rng, 3)
    d = class_distributions([a, b, f], [-1, -1, 1], HistConfig.uniform(30))
    for c, ch in enumerate(CHANNELS):
        ha = normalized_histogram(list(a)[c], 30).bins
        hb = normalized_histogram(list(b)[c], 30).bins
        expected = (ha * a.n_pixels + hb * b.n_pixels) / (a.n_pixels + b.n_pixels)
        assert np.allclose(d.natural[ch].bins, expected, atol=1e-15)


def test_average_pooling_option(rng):
    a, b, f = _planes(rng, 3)
    d = class_distributions([a, b, f], [-1, -1, 1], HistConfig.uniform(30, pooling="average"))
    ha = normalized_histogram(a.saturation, 30).bins
    hb = normalized_histogram(b.saturation, 30).bins
    assert np.allclose(d.natural["s"].bins, (ha + hb) / 2, atol=1e-15)


def test_class_distributions_match_recount(rng):
    planes = _planes(rng, 20)
    labels = [1 if i % 3 else -1 for i in range(20)]
    d = class_distributions(planes, labels, HistConfig.uniform(40))
    ranges = ((0, 1), (0, 1), (0, 255), (0, 255))
    for c, ch in enumerate(CHANNELS):
        for cls, dist in ((-1, d.natural), (1, d.fake)):
            pooled = np.concatenate([list(p)[c].values.ravel() for p, y in zip(planes, labels) if y == cls])
            assert np.allclose(dist[ch].bins, recount_histogram(pooled, 40, *ranges[c]), atol=1e-15)


def test_missing_class(rng):
    with pytest.raises(ValueError, match="class has no images"):
        class_distributions(_planes(rng, 2), [1, 1])


def test_point_mass_feature():
    img = np.full((4, 4, 3), (255, 0, 0), dtype=np.uint8)
    planes = extract_channel_planes(img, ChannelConfig(0))
    feat = hist_feature(planes, DistinctiveBins(0, 199, 0, 199))
    assert len(feat) == 8
    assert feat[0] == 1.0 and feat[1] == 1.0
    # saturation is 1 everywhere, so all mass sits in the last bin
    assert feat[2] == 1.0


def test_feature_bounds_and_permutation_invariance(rng):
    for _ in range(10):
        img = random_rgb(rng, 12, 12)
        u = DistinctiveBins(*rng.integers(0, 200, size=4))
        planes = extract_channel_planes(img, ChannelConfig(0))
        feat = hist_feature(planes, u)
        assert np.all(feat[0::2] >= 0) and np.all(feat[0::2] <= 1)
        assert np.all(feat[1::2] >= 0) and np.all(feat[1::2] <= 2)
        # with radius 0 the planes are per-pixel, so shuffling pixels leaves histograms unchanged
        perm = rng.permutation(144)
        shuffled = img.reshape(-1, 3)[perm].reshape(12, 12, 3)
        assert np.allclose(hist_feature(extract_channel_planes(shuffled, ChannelConfig(0)), u), feat, atol=1e-15)


def test_bin_index_out_of_range(rng):
    planes = _planes(rng, 1)[0]
    with pytest.raises(ValueError):
        hist_feature(planes, DistinctiveBins(0, 0, 0, 200))


def test_distinctive_bins_symmetric():
    n = {ch: Histogram(np.array([0.2, 0.8]), ch, 0, 1) for ch in CHANNELS}
    f = {ch: Histogram(np.array([0.6, 0.4]), ch, 0, 1) for ch in CHANNELS}
    from fcid.histograms import ClassDistributions

    assert distinctive_bins(ClassDistributions(n, f)) == distinctive_bins(ClassDistributions(f, n))


def test_bin_sweep_and_defaults():
    assert HistConfig().bins == (200, 200, 200, 200)
    assert BIN_SWEEP == (200, 205, 210, 215, 220, 225, 230, 235, 240, 245, 250, 255, 260, 256)
    for k in BIN_SWEEP:
        assert HistConfig.uniform(k).bins == (k,) * 4


def test_histdump_csv(rng, tmp_path):
    planes = _planes(rng, 6)
    d = class_distributions(planes, [1, -1] * 3, HistConfig.uniform(25))
    path = tmp_path / "h.csv"
    write_histdump(d, path)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["channel", "bin_index", "bin_center", "natural_mass", "fake_mass", "abs_diff"]
    assert len(rows) == 4 * 25
    for ch in CHANNELS:
        mine = [r for r in rows if r["channel"] == ch]
        assert abs(sum(float(r["natural_mass"]) for r in mine) - 1) < 1e-9
        for r in mine:
            assert float(r["abs_diff"]) == abs(float(r["natural_mass"]) - float(r["fake_mass"]))
