"""Diagonal-covariance Gaussian mixtures over 4-D pixel samples, fitted by EM."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .channels import ChannelPlanes

N_DIMS = 4
# dark/bright live in [0, 255]; dividing by 255 puts every dimension in [0, 1]
FEATURE_SCALE = (1.0, 1.0, 255.0, 255.0)
DEFAULT_COMPONENTS = 8
DEFAULT_MAX_SAMPLES = 2048
LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class SampleSet:
    """Stacked per-pixel rows ``[hue, saturation, dark, bright]``.

    ``offsets`` has one more entry than there are images; image ``i`` owns
    rows ``offsets[i]:offsets[i + 1]``.
    """

    samples: np.ndarray
    offsets: np.ndarray

    @property
    def n_images(self) -> int:
        return len(self.offsets) - 1

    def image_rows(self, i: int) -> np.ndarray:
        return self.samples[self.offsets[i]:self.offsets[i + 1]]

    @classmethod
    def concatenate(cls, sets: Sequence["SampleSet"]) -> "SampleSet":
        if not sets:
            raise ValueError("no sample sets to concatenate")
        samples = np.concatenate([s.samples for s in sets], axis=0)
        sizes = np.concatenate([np.diff(s.offsets) for s in sets])
        return cls(samples, np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64))


@dataclass(frozen=True)
class EmConfig:
    max_iter: int = 100
    tol: float = 1e-6
    var_floor: float = 1e-6
    seed: int = 0
    kmeans_iter: int = 10


@dataclass
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    # per-iteration mean log-likelihood of the training samples
    history: list[float] = field(default_factory=list, compare=False, repr=False)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def n_dims(self) -> int:
        return self.means.shape[1]

    def validate(self, var_floor: float = 0.0):
        if not np.isclose(self.weights.sum(), 1.0, rtol=0, atol=1e-9):
            raise ValueError("mixture weights do not sum to 1")
        if np.any(self.weights <= 0):
            raise ValueError("mixture weights must be positive")
        if np.any(self.variances < var_floor) or np.any(self.variances <= 0):
            raise ValueError("variances must be positive and above the floor")


def build_sample_set(planes: ChannelPlanes, max_samples_per_image: int | None = DEFAULT_MAX_SAMPLES,
                     seed: int = 0) -> SampleSet:
    """Row-major ``[h, s, dc/255, bc/255]`` rows for one image.

    When the image has more pixels than the cap, a seeded uniform subsample
    (kept in row-major order) is returned.
    """
    if planes.n_pixels == 0:
        raise ValueError("no pixels in image")
    cols = [np.asarray(p.values, dtype=np.float64).ravel() / scale
            for p, scale in zip(planes, FEATURE_SCALE)]
    rows = np.stack(cols, axis=1)
    if max_samples_per_image is not None and len(rows) > max_samples_per_image:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(rows), size=max_samples_per_image, replace=False))
        rows = rows[keep]
    return SampleSet(rows, np.array([0, len(rows)], dtype=np.int64))


def component_log_densities(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """``log(w_a) + log N(x | mu_a, diag(var_a))`` as an ``(n, N_m)`` array."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.n_dims:
        raise ValueError(f"sample dimension {x.shape[1]} does not match model dimension {model.n_dims}")
    inv_var = 1.0 / model.variances
    maha = np.empty((len(x), model.n_components))
    for a in range(model.n_components):
        maha[:, a] = ((x - model.means[a]) ** 2) @ inv_var[a]
    log_norm = -0.5 * (model.n_dims * LOG_2PI + np.sum(np.log(model.variances), axis=1))
    return np.log(model.weights) + log_norm - 0.5 * maha


def log_density(model: GmmModel, sample) -> float | np.ndarray:
    """``log sum_a w_a p_a(x)``, evaluated with log-sum-exp.

    A single 1-D sample gives a float; a 2-D batch gives an array.
    """
    arr = np.asarray(sample, dtype=np.float64)
    out = logsumexp(component_log_densities(model, arr), axis=1)
    return float(out[0]) if arr.ndim == 1 else out


def posteriors(model: GmmModel, sample) -> np.ndarray:
    """Responsibilities of each component; rows sum to 1."""
    arr = np.asarray(sample, dtype=np.float64)
    lp = component_log_densities(model, arr)
    gamma = np.exp(lp - logsumexp(lp, axis=1, keepdims=True))
    gamma /= gamma.sum(axis=1, keepdims=True)
    return gamma[0] if arr.ndim == 1 else gamma


def log_likelihood(model: GmmModel, x: np.ndarray) -> float:
    """Total log-likelihood of the rows of ``x`` under the mixture."""
    return float(np.sum(log_density(model, np.atleast_2d(x))))


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            # every point already coincides with a chosen center
            centers[i] = x[rng.integers(n)]
        else:
            centers[i] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((x - centers[i]) ** 2, axis=1))
    return centers


def _sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = (x ** 2).sum(axis=1)[:, None] - 2.0 * x @ centers.T + (centers ** 2).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_init(x: np.ndarray, k: int, cfg: EmConfig) -> GmmModel:
    rng = np.random.default_rng(cfg.seed)
    centers = _kmeans_pp(x, k, rng)
    for _ in range(cfg.kmeans_iter):
        assign = np.argmin(_sq_dists(x, centers), axis=1)
        for j in range(k):
            members = x[assign == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    assign = np.argmin(_sq_dists(x, centers), axis=1)

    overall_var = np.maximum(x.var(axis=0), cfg.var_floor)
    weights = np.empty(k)
    variances = np.empty_like(centers)
    for j in range(k):
        members = x[assign == j]
        if len(members) > 1:
            weights[j] = len(members)
            variances[j] = np.maximum(members.var(axis=0), cfg.var_floor)
        else:
            weights[j] = max(len(members), 1)
            variances[j] = overall_var
    return GmmModel(weights / weights.sum(), centers, variances)


def _m_step(x: np.ndarray, gamma: np.ndarray, var_floor: float) -> GmmModel:
    nk = gamma.sum(axis=0)
    # components that lost all responsibility keep a negligible positive weight
    nk = np.maximum(nk, 1e-12 * len(x))
    means = (gamma.T @ x) / nk[:, None]
    variances = np.empty_like(means)
    for a in range(len(nk)):
        variances[a] = gamma[:, a] @ ((x - means[a]) ** 2) / nk[a]
    variances = np.maximum(variances, var_floor)
    weights = nk / nk.sum()
    return GmmModel(weights, means, variances)


def fit_gmm(samples, n_components: int = DEFAULT_COMPONENTS, cfg: EmConfig | None = None) -> GmmModel:
    """Fit a diagonal GMM by EM from a k-means++ / k-means initialisation.

    Iteration stops when the relative improvement of the log-likelihood drops
    below ``cfg.tol`` or after ``cfg.max_iter`` EM steps.
    """
    cfg = cfg or EmConfig()
    x = np.asarray(getattr(samples, "samples", samples), dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("samples must be a 2-D array")
    if len(x) < n_components:
        raise ValueError(f"need at least {n_components} samples for {n_components} components, got {len(x)}")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain non-finite values")

    model = _kmeans_init(x, n_components, cfg)
    history = []
    prev = None
    for _ in range(cfg.max_iter):
        lp = component_log_densities(model, x)
        norm = logsumexp(lp, axis=1, keepdims=True)
        ll = float(np.mean(norm))
        history.append(ll)
        if prev is not None and ll - prev < cfg.tol * abs(prev):
            break
        prev = ll
        gamma = np.exp(lp - norm)
        model = _m_step(x, gamma, cfg.var_floor)
    else:
        history.append(float(np.mean(log_density(model, x))))
    model.history = history
    return model
