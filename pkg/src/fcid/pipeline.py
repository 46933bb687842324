"""Training, detection and evaluation drivers for the two detection schemes.

``hist`` builds the 8-D histogram feature against class-level distinctive
bins; ``fe`` fits a GMM to pooled pixel samples and encodes every image as a
Fisher vector. Both feed an RBF SVM with calibrated probabilities.
"""

from __future__ import annotations

import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .channels import ChannelPlanes, extract_channel_planes
from .dataset import DatasetManifest, FcidError, file_digest, load_image, stage
from .evaluation import (
    DEFAULT_C_GRID,
    DEFAULT_G_GRID,
    GridResult,
    average_threshold,
    evaluate,
    grid_search,
    k_fold_split,
    split_half,
    threshold_sweep,
)
from .fisher import encode_fisher
from .gmm import SampleSet, build_sample_set, fit_gmm
from .histograms import (
    BIN_SWEEP,
    HistConfig,
    class_distributions,
    distinctive_bins,
    hist_feature,
)
from .model import FcidConfig, FcidModel, default_config
from .svm import train_svm

log = logging.getLogger(__name__)


@dataclass
class ImageData:
    """Decoded channels of one image plus what identifies it."""

    path: Path | None
    planes: ChannelPlanes
    digest: str
    gray: bool = False


@dataclass
class Detection:
    path: str
    label: str | None
    probability: float | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _pool_map(fn: Callable, items: Sequence, threads: int = 1) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def prepare_image(path, cfg: FcidConfig) -> ImageData:
    rgb, gray = load_image(path)
    return ImageData(Path(path), extract_channel_planes(rgb, cfg.channel), file_digest(path), gray)


def prepare_array(rgb: np.ndarray, cfg: FcidConfig, name: str = "<array>") -> ImageData:
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    digest = format(zlib.crc32(rgb.tobytes()) ^ zlib.crc32(np.asarray(rgb.shape).tobytes()), "08x")
    return ImageData(Path(name), extract_channel_planes(rgb, cfg.channel), digest)


def load_images(manifest: DatasetManifest, cfg: FcidConfig, threads: int = 1) -> list[ImageData]:
    with stage("extract"):
        return _pool_map(lambda p: prepare_image(p, cfg), manifest.paths, threads)


def _sample_seed(cfg: FcidConfig, img: ImageData) -> list[int]:
    # depends on the image content, not its position in a batch
    return [cfg.seed, zlib.crc32(img.digest.encode())]


def image_samples(img: ImageData, cfg: FcidConfig) -> SampleSet:
    return build_sample_set(img.planes, cfg.max_samples_per_image, _sample_seed(cfg, img))


def _check_labels(labels) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64)
    if not (np.any(y > 0) and np.any(y < 0)):
        raise FcidError("training set needs both natural and fake images", stage="train")
    return y


def _provenance(cfg: FcidConfig, images: Sequence[ImageData]) -> dict:
    return {
        "seed": cfg.seed,
        "n_train": len(images),
        "training_digests": sorted(img.digest for img in images),
    }


def fit_hist(images: Sequence[ImageData], labels, cfg: FcidConfig | None = None) -> FcidModel:
    """Histogram scheme on already-decoded images."""
    cfg = cfg or default_config("hist")
    y = _check_labels(labels)
    planes = [img.planes for img in images]
    with stage("class-distributions"):
        dists = class_distributions(planes, y, cfg.hist)
    with stage("distinctive-bins"):
        upsilon = distinctive_bins(dists)
    with stage("features"):
        x = np.stack([hist_feature(p, upsilon, cfg.hist.bins) for p in planes])
    with stage("svm"):
        svm = train_svm(x, y, cfg.svm, cfg.seed)
    return FcidModel("hist", replace(cfg, method="hist"), svm, distributions=dists, upsilon=upsilon,
                     provenance=_provenance(cfg, images))


def hist_features(model: FcidModel, images: Sequence[ImageData]) -> np.ndarray:
    return np.stack([hist_feature(img.planes, model.upsilon, model.bins) for img in images])


def fe_features(model: FcidModel, images: Sequence[ImageData], threads: int = 1) -> np.ndarray:
    cfg = model.config
    return np.stack(_pool_map(
        lambda img: encode_fisher(model.gmm, image_samples(img, cfg).samples, cfg.fisher), images, threads))


def fit_fe(images: Sequence[ImageData], labels, cfg: FcidConfig | None = None, threads: int = 1) -> FcidModel:
    """Fisher-vector scheme on already-decoded images."""
    cfg = cfg or default_config("fe")
    y = _check_labels(labels)
    with stage("samples"):
        sets = _pool_map(lambda img: image_samples(img, cfg), images, threads)
        pooled = SampleSet.concatenate(sets)
    with stage("gmm"):
        gmm = fit_gmm(pooled, cfg.n_components, cfg.em)
    with stage("fisher"):
        x = np.stack(_pool_map(lambda s: encode_fisher(gmm, s.samples, cfg.fisher), sets, threads))
    with stage("svm"):
        svm = train_svm(x, y, cfg.svm, cfg.seed)
    return FcidModel("fe", replace(cfg, method="fe"), svm, gmm=gmm, provenance=_provenance(cfg, images))


def fit_model(images, labels, cfg: FcidConfig, threads: int = 1) -> FcidModel:
    if cfg.method == "hist":
        return fit_hist(images, labels, cfg)
    if cfg.method == "fe":
        return fit_fe(images, labels, cfg, threads)
    raise FcidError(f"unknown method {cfg.method!r}", stage="train")


def features(model: FcidModel, images: Sequence[ImageData], threads: int = 1) -> np.ndarray:
    if model.method == "hist":
        return hist_features(model, images)
    return fe_features(model, images, threads)


def probabilities(model: FcidModel, images: Sequence[ImageData], threads: int = 1) -> np.ndarray:
    if not images:
        return np.empty(0)
    return np.asarray(model.svm.predict_probability(features(model, images, threads)), dtype=np.float64)


def train_fcid_hist(manifest: DatasetManifest, cfg: FcidConfig | None = None, threads: int = 1) -> FcidModel:
    cfg = cfg or default_config("hist")
    images = load_images(manifest, cfg, threads)
    return fit_hist(images, manifest.labels, cfg)


def train_fcid_fe(manifest: DatasetManifest, cfg: FcidConfig | None = None, threads: int = 1) -> FcidModel:
    cfg = cfg or default_config("fe")
    images = load_images(manifest, cfg, threads)
    return fit_fe(images, manifest.labels, cfg, threads)


def train(manifest: DatasetManifest, cfg: FcidConfig, threads: int = 1) -> FcidModel:
    images = load_images(manifest, cfg, threads)
    return fit_model(images, manifest.labels, cfg, threads)


def _detect_one(model: FcidModel, item) -> tuple[ImageData | None, str | None]:
    try:
        if isinstance(item, np.ndarray):
            return prepare_array(item, model.config), None
        return prepare_image(item, model.config), None
    except (OSError, ValueError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def detect(model: FcidModel, images: Sequence, threads: int = 1) -> list[Detection]:
    """Label every input; unreadable inputs yield an error entry, order is kept."""
    prepared = _pool_map(lambda it: _detect_one(model, it), list(images), threads)
    good = [img for img, err in prepared if err is None]
    probs = iter(probabilities(model, good, threads).tolist())
    out = []
    for item, (img, err) in zip(images, prepared):
        name = "<array>" if isinstance(item, np.ndarray) else str(item)
        if err is not None:
            out.append(Detection(name, None, None, err))
            continue
        p = next(probs)
        out.append(Detection(name, "fake" if p >= model.threshold else "natural", p))
    return out


def detect_fcid_hist(model: FcidModel, images: Sequence, threads: int = 1) -> list[Detection]:
    if model.method != "hist":
        raise FcidError(f"model method is {model.method!r}, expected 'hist'", stage="detect")
    return detect(model, images, threads)


def detect_fcid_fe(model: FcidModel, images: Sequence, threads: int = 1) -> list[Detection]:
    if model.method != "fe":
        raise FcidError(f"model method is {model.method!r}, expected 'fe'", stage="detect")
    return detect(model, images, threads)


def check_disjoint(model: FcidModel, images: Sequence[ImageData]):
    """Refuse evaluation images that were part of the model's training set."""
    seen = set(model.provenance.get("training_digests", []))
    clash = [str(img.path) for img in images if img.digest in seen]
    if clash:
        raise FcidError(f"{len(clash)} evaluation image(s) were used for training, e.g. {clash[0]}",
                        stage="evaluate")


# -- protocol ---------------------------------------------------------------


@dataclass
class CrossValidation:
    method: str
    fold_hter: list[float]
    fold_auc: list[float]
    fold_thresholds: list[float]
    threshold: float
    folds: list[list[int]] = field(repr=False, default_factory=list)

    @property
    def mean_hter(self) -> float:
        return float(np.mean(self.fold_hter))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "mean_hter": self.mean_hter,
            "mean_auc": float(np.mean(self.fold_auc)),
            "averaged_threshold": self.threshold,
            "folds": [
                {"fold": i + 1, "hter": h, "auc": a, "optimal_threshold": t, "indices": f}
                for i, (h, a, t, f) in enumerate(zip(self.fold_hter, self.fold_auc, self.fold_thresholds,
                                                      self.folds))
            ],
        }


def cross_validate(images: Sequence[ImageData], labels, cfg: FcidConfig, k: int = 10,
                   groups: Sequence | None = None, threads: int = 1) -> CrossValidation:
    """k-fold CV reporting per-fold HTER at the configured threshold.

    Each fold also contributes its HTER-optimal threshold from the 0.01 sweep;
    their average is the cross-validated threshold.
    """
    y = np.asarray(labels, dtype=np.int64)
    folds = k_fold_split(len(images), k, cfg.seed, groups)
    hters, aucs, thresholds = [], [], []
    for i, test in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(len(images)), test)
        with stage(f"fold-{i + 1}"):
            model = fit_model([images[j] for j in train_idx], y[train_idx], cfg, threads)
            probs = probabilities(model, [images[j] for j in test], threads)
            report = evaluate(probs, y[test], model.threshold)
            sweep = threshold_sweep(probs, y[test])
        hters.append(report.hter)
        aucs.append(report.auc)
        thresholds.append(sweep.best_threshold)
        log.info("fold %d/%d: hter=%.4f auc=%.4f t*=%.2f", i + 1, k, report.hter, report.auc, sweep.best_threshold)
    return CrossValidation(cfg.method, hters, aucs, thresholds, average_threshold(thresholds),
                           [f.tolist() for f in folds])


def _split_for_tuning(images, labels, groups, validation, cfg):
    y = np.asarray(labels, dtype=np.int64)
    if validation is not None:
        val_images, val_y = validation
        return list(images), y, list(val_images), np.asarray(val_y, dtype=np.int64)
    a, b = split_half(len(images), cfg.seed, groups)
    return [images[i] for i in a], y[a], [images[i] for i in b], y[b]


def tune_svm(images: Sequence[ImageData], labels, cfg: FcidConfig, groups=None, validation=None,
             c_grid=DEFAULT_C_GRID, g_grid=DEFAULT_G_GRID, threads: int = 1) -> GridResult:
    """Grid search of SVM cost and gamma on a training / validation split.

    The feature extractor (distinctive bins or GMM) is fitted once on the
    training part; only the SVM is retrained per cell.
    """
    tr_img, tr_y, va_img, va_y = _split_for_tuning(images, labels, groups, validation, cfg)
    with stage("grid-search"):
        base = fit_model(tr_img, tr_y, cfg, threads)
        tr_x = features(base, tr_img, threads)
        va_x = features(base, va_img, threads)
        return grid_search(tr_x, tr_y, va_x, va_y, c_grid, g_grid, cfg.svm, cfg.seed)


def bin_count_study(images: Sequence[ImageData], labels, cfg: FcidConfig, groups=None, validation=None,
                    bin_counts: Sequence[int] = BIN_SWEEP) -> dict[int, float]:
    """Validation HTER of the histogram scheme for each uniform bin count."""
    tr_img, tr_y, va_img, va_y = _split_for_tuning(images, labels, groups, validation, cfg)
    out = {}
    for k in bin_counts:
        run = replace(cfg, method="hist", hist=HistConfig.uniform(int(k), cfg.hist.pooling))
        with stage(f"bins-{k}"):
            model = fit_hist(tr_img, tr_y, run)
            report = evaluate(probabilities(model, va_img), va_y, model.threshold)
        out[int(k)] = report.hter
    return out
