"""Fisher-vector encoding of an image's pixel samples under a fitted GMM.

Layout of the encoded vector (``N_m`` components, ``N_v`` dimensions)::

    [ weight block (N_m) | mean block (N_m * N_v) | sigma block (N_m * N_v) ]

Mean and sigma blocks are component-major. ``sigma`` is the per-dimension
standard deviation. Weights are differentiated in the parameterisation that
eliminates the sum-to-one constraint against the first component
(``w_1 = 1 - sum_{a>1} w_a``), so the first weight entry is always zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gmm import GmmModel, posteriors


@dataclass(frozen=True)
class FisherConfig:
    # "unit": normalisers use N = 1 on the mean gradient, so encodings of
    # different-sized images are comparable. "subset": N = the image's row count.
    lambda_count: str = "unit"
    # "none", or any of "power" / "l2" / "power+l2"
    normalization: str = "none"

    def __post_init__(self):
        if self.lambda_count not in ("unit", "subset"):
            raise ValueError(f"lambda_count must be 'unit' or 'subset', got {self.lambda_count!r}")
        if self.normalization not in ("none", "power", "l2", "power+l2"):
            raise ValueError(f"unknown normalization {self.normalization!r}")


def fisher_dim(n_components: int, n_dims: int = 4) -> int:
    return n_components * (1 + 2 * n_dims)


def fisher_gradients(model: GmmModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean per-sample gradient of the log-likelihood.

    Returns ``(d_weight, d_mean, d_sigma)`` with shapes ``(N_m,)``,
    ``(N_m, N_v)`` and ``(N_m, N_v)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if len(x) == 0:
        raise ValueError("no samples for image")
    n = len(x)
    gamma = posteriors(model, x)
    w = model.weights
    sigma = np.sqrt(model.variances)

    mean_gamma = gamma.sum(axis=0) / n
    d_weight = mean_gamma / w - mean_gamma[0] / w[0]
    d_weight[0] = 0.0

    d_mean = np.empty_like(model.means)
    d_sigma = np.empty_like(model.means)
    for a in range(model.n_components):
        z = (x - model.means[a]) / sigma[a]
        g = gamma[:, a]
        d_mean[a] = (g @ z) / n / sigma[a]
        d_sigma[a] = (g @ (z ** 2 - 1.0)) / n / sigma[a]
    return d_weight, d_mean, d_sigma


def fisher_normalizers(model: GmmModel, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse square-root Fisher information for each parameter block."""
    w = model.weights
    var = model.variances
    lam_w = (n * (1.0 / w + 1.0 / w[0])) ** -0.5
    lam_mu = (n * w[:, None] / var) ** -0.5
    lam_sigma = (2.0 * n * w[:, None] / var) ** -0.5
    return lam_w, lam_mu, lam_sigma


def encode_fisher(model: GmmModel, subset, cfg: FisherConfig | None = None) -> np.ndarray:
    """Encode one image's ``(n, N_v)`` sample rows into a Fisher vector."""
    cfg = cfg or FisherConfig()
    x = np.asarray(getattr(subset, "samples", subset), dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("no samples for image")
    d_w, d_mu, d_sigma = fisher_gradients(model, x)
    count = 1 if cfg.lambda_count == "unit" else len(x)
    lam_w, lam_mu, lam_sigma = fisher_normalizers(model, count)
    fv = np.concatenate([lam_w * d_w, (lam_mu * d_mu).ravel(), (lam_sigma * d_sigma).ravel()])

    if "power" in cfg.normalization:
        fv = np.sign(fv) * np.sqrt(np.abs(fv))
    if "l2" in cfg.normalization:
        norm = np.linalg.norm(fv)
        if norm > 0:
            fv = fv / norm
    return fv
