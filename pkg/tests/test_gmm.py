import itertools
import math

import numpy as np
import pytest

from fcid.channels import ChannelConfig, extract_channel_planes
from fcid.gmm import (
    EmConfig,
    GmmModel,
    SampleSet,
    build_sample_set,
    fit_gmm,
    log_density,
    log_likelihood,
    posteriors,
)
from oracles import gmm_loglik


def mixture(rng, k, n, d=4, spread=0.04, min_gap=0.3):
    """Well-separated isotropic clusters inside the unit cube."""
    while True:
        centers = rng.uniform(0.15, 0.85, size=(k, d))
        gaps = [np.linalg.norm(a - b) for a, b in itertools.combinations(centers, 2)]
        if min(gaps, default=1.0) > min_gap:
            break
    labels = rng.integers(0, k, size=n)
    return centers[labels] + rng.normal(0, spread, size=(n, d)), centers


def best_perm_error(found, truth):
    return min(np.max(np.abs(found[list(p)] - truth)) for p in itertools.permutations(range(len(truth))))


def test_sample_set_read_off():
    img = np.array([[[10, 20, 30], [200, 100, 50]], [[0, 0, 0], [255, 255, 255]]], dtype=np.uint8)
    planes = extract_channel_planes(img, ChannelConfig(0))
    s = build_sample_set(planes, None)
    assert s.samples.shape == (4, 4)
    flat = [p.values.ravel() for p in planes]
    for i in range(4):
        expected = [flat[0][i], flat[1][i], flat[2][i] / 255, flat[3][i] / 255]
        assert s.samples[i].tolist() == expected


def test_constant_image_rows_identical():
    planes = extract_channel_planes(np.full((5, 5, 3), (40, 90, 200), dtype=np.uint8))
    s = build_sample_set(planes, None)
    assert np.all(s.samples == s.samples[0])


def test_subsample_cap_is_deterministic(rng):
    planes = extract_channel_planes(rng.integers(0, 256, (16, 16, 3), dtype=np.uint8))
    a = build_sample_set(planes, 64, seed=9)
    b = build_sample_set(planes, 64, seed=9)
    c = build_sample_set(planes, 64, seed=10)
    assert a.samples.shape == (64, 4)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_sample_set_concatenate_offsets(rng):
    sets = [SampleSet(rng.random((n, 4)), np.array([0, n])) for n in (3, 5, 2)]
    joined = SampleSet.concatenate(sets)
    assert joined.offsets.tolist() == [0, 3, 8, 10]
    assert np.array_equal(joined.image_rows(1), sets[1].samples)


def test_single_component_closed_form(rng):
    x = rng.normal(0.5, 0.1, size=(500, 4))
    m = fit_gmm(x, 1)
    assert m.weights.tolist() == [1.0]
    assert np.allclose(m.means[0], x.mean(axis=0), atol=1e-12)
    assert np.allclose(m.variances[0], x.var(axis=0), rtol=1e-10)


def test_two_clusters_recovered(rng):
    x, centers = mixture(rng, 2, 800)
    m = fit_gmm(x, 2)
    assert best_perm_error(m.means, centers) < 0.05


def test_em_monotone_and_invariants(rng):
    x, _ = mixture(rng, 4, 1500, spread=0.08, min_gap=0.1)
    cfg = EmConfig(max_iter=60, tol=0.0)
    m = fit_gmm(x, 6, cfg)
    h = np.array(m.history)
    assert np.all(np.diff(h) >= -1e-8 * np.abs(h[:-1]))
    m.validate(cfg.var_floor)


def test_fit_is_deterministic(rng):
    x, _ = mixture(rng, 3, 600)
    a, b = fit_gmm(x, 3), fit_gmm(x, 3)
    assert np.array_equal(a.means, b.means) and np.array_equal(a.variances, b.variances)


def test_too_few_samples():
    with pytest.raises(ValueError):
        fit_gmm(np.zeros((3, 4)), 4)


def test_degenerate_samples_floor_variance():
    m = fit_gmm(np.full((50, 4), 0.3), 3)
    m.validate(1e-6)
    assert np.allclose(m.means, 0.3)
    assert np.all(m.variances == 1e-6)
    assert np.isfinite(log_likelihood(m, np.full((2, 4), 0.3)))


def test_log_density_unit_gaussian_at_mean():
    m = GmmModel(np.array([1.0]), np.zeros((1, 4)), np.ones((1, 4)))
    assert log_density(m, np.zeros(4)) == pytest.approx(-2 * math.log(2 * math.pi), abs=1e-14)
    assert log_density(m, np.zeros(4)) == pytest.approx(-3.67575, abs=1e-5)


def test_log_density_far_sample_is_finite():
    m = GmmModel(np.array([0.5, 0.5]), np.array([[0.0] * 4, [1.0] * 4]), np.full((2, 4), 1e-4))
    val = log_density(m, np.full(4, 50.0))
    assert np.isfinite(val) and val < -1e6


def test_log_density_matches_naive(rng):
    for _ in range(10):
        k = int(rng.integers(1, 5))
        w = rng.random(k) + 0.1
        w /= w.sum()
        mu = rng.random((k, 4))
        var = rng.uniform(0.01, 0.2, size=(k, 4))
        x = rng.random((7, 4))
        m = GmmModel(w, mu, var)
        assert log_likelihood(m, x) == pytest.approx(gmm_loglik(x, w, mu, np.sqrt(var)), rel=1e-12)


def test_posteriors():
    one = GmmModel(np.array([1.0]), np.zeros((1, 4)), np.ones((1, 4)))
    assert posteriors(one, np.ones(4)).tolist() == [1.0]
    two = GmmModel(np.array([0.5, 0.5]), np.array([[0.0] * 4, [1.0] * 4]), np.ones((2, 4)))
    assert posteriors(two, np.full(4, 0.5)) == pytest.approx([0.5, 0.5], abs=1e-15)


def test_posteriors_sum_to_one(rng):
    x, _ = mixture(rng, 3, 300)
    m = fit_gmm(x, 5)
    g = posteriors(m, rng.random((100, 4)) * 3 - 1)
    assert np.all(np.abs(g.sum(axis=1) - 1) <= 1e-12)
