"""Detection metrics and the parameter-selection / cross-validation protocol.

Fake images are positives (+1), natural images negatives (-1).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .svm import SvmConfig, train_svm

log = logging.getLogger(__name__)

# 2^-6 .. 2^6 for both cost and gamma
DEFAULT_C_GRID = tuple(2.0 ** e for e in range(-6, 7))
DEFAULT_G_GRID = tuple(2.0 ** e for e in range(-6, 7))
THRESHOLD_STEPS = 100


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def fpr(self) -> float:
        if self.tn + self.fp == 0:
            raise ValueError("undefined rate: no negative (natural) samples")
        return self.fp / (self.tn + self.fp)

    @property
    def fnr(self) -> float:
        if self.tp + self.fn == 0:
            raise ValueError("undefined rate: no positive (fake) samples")
        return self.fn / (self.tp + self.fn)

    def flipped(self) -> "ConfusionCounts":
        """Counts obtained by inverting every prediction."""
        return ConfusionCounts(tp=self.fn, tn=self.fp, fp=self.tn, fn=self.tp)


@dataclass
class EvalReport:
    hter: float
    fpr: float
    fnr: float
    roc: list[tuple[float, float]]
    auc: float
    counts: ConfusionCounts | None = None
    threshold: float | None = None

    def to_dict(self) -> dict:
        out = {
            "hter": self.hter,
            "fpr": self.fpr,
            "fnr": self.fnr,
            "auc": self.auc,
            "roc": [list(p) for p in self.roc],
        }
        if self.counts is not None:
            out["counts"] = {"tp": self.counts.tp, "tn": self.counts.tn,
                             "fp": self.counts.fp, "fn": self.counts.fn}
        if self.threshold is not None:
            out["threshold"] = self.threshold
        return out


def _labels(labels) -> np.ndarray:
    y = np.asarray(labels)
    if y.dtype == bool:
        return np.where(y, 1, -1)
    y = y.astype(np.int64)
    if not set(np.unique(y).tolist()) <= {-1, 1}:
        raise ValueError("labels must be -1 (natural) or +1 (fake)")
    return y


def confusion_counts(predictions, labels) -> ConfusionCounts:
    p = _labels(predictions)
    y = _labels(labels)
    if p.shape != y.shape:
        raise ValueError("predictions and labels differ in length")
    return ConfusionCounts(
        tp=int(np.sum((p > 0) & (y > 0))),
        tn=int(np.sum((p < 0) & (y < 0))),
        fp=int(np.sum((p > 0) & (y < 0))),
        fn=int(np.sum((p < 0) & (y > 0))),
    )


def hter(counts: ConfusionCounts) -> float:
    """Half total error rate ``(FPR + FNR) / 2``."""
    return (counts.fpr + counts.fnr) / 2.0


def _require_both(y: np.ndarray):
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("both classes must be present")


def roc_curve(scores, labels) -> list[tuple[float, float]]:
    """ROC points from sweeping every distinct score, high to low.

    Tied scores enter as one group, producing a diagonal segment.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = _labels(labels)
    _require_both(y)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    n_pos = int(np.sum(y > 0))
    n_neg = int(np.sum(y < 0))
    # last index of each tie group
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y > 0)[ends]
    fp = np.cumsum(y < 0)[ends]
    pts = [(0.0, 0.0)]
    pts += [(float(f) / n_neg, float(t) / n_pos) for f, t in zip(fp, tp)]
    return pts


def auc_trapezoid(roc: Sequence[tuple[float, float]]) -> float:
    x = np.array([p[0] for p in roc])
    y = np.array([p[1] for p in roc])
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))


def roc_auc(scores, labels) -> tuple[list[tuple[float, float]], float]:
    roc = roc_curve(scores, labels)
    return roc, auc_trapezoid(roc)


def evaluate(probabilities, labels, threshold: float) -> EvalReport:
    """Full report for probabilities thresholded inclusively at ``threshold``."""
    p = np.asarray(probabilities, dtype=np.float64)
    y = _labels(labels)
    _require_both(y)
    pred = np.where(p >= threshold, 1, -1)
    counts = confusion_counts(pred, y)
    roc, auc = roc_auc(p, y)
    return EvalReport(hter(counts), counts.fpr, counts.fnr, roc, auc, counts, threshold)


def k_fold_split(n: int, k: int, seed: int = 0, groups: Sequence | None = None) -> list[np.ndarray]:
    """Seeded partition of ``range(n)`` into ``k`` near-equal folds.

    With ``groups``, samples sharing a group id (a natural image and its
    colorized twin) always land in the same fold; groups of ``None`` are
    singletons.
    """
    if k < 2:
        raise ValueError(f"need at least 2 folds, got {k}")
    if n < k:
        raise ValueError(f"cannot split {n} samples into {k} folds")
    if groups is None:
        units = [[i] for i in range(n)]
    else:
        if len(groups) != n:
            raise ValueError("groups must have one entry per sample")
        index: dict = {}
        units = []
        for i, gid in enumerate(groups):
            if gid is None or gid == "":
                units.append([i])
            elif gid in index:
                units[index[gid]].append(i)
            else:
                index[gid] = len(units)
                units.append([i])
        if len(units) < k:
            raise ValueError(f"cannot split {len(units)} groups into {k} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(units))
    folds = [[] for _ in range(k)]
    for pos, u in enumerate(order):
        folds[pos % k].extend(units[u])
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


def split_half(n: int, seed: int = 0, groups: Sequence | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Seeded 50/50 split, keeping grouped samples together."""
    a, b = k_fold_split(n, 2, seed, groups)
    return a, b


def threshold_grid() -> np.ndarray:
    return np.arange(THRESHOLD_STEPS + 1) / THRESHOLD_STEPS


@dataclass
class ThresholdSweep:
    best_threshold: float
    best_index: int
    thresholds: np.ndarray
    hter: np.ndarray

    def rows(self) -> list[tuple[float, float]]:
        return list(zip(self.thresholds.tolist(), self.hter.tolist()))


def threshold_sweep(probabilities, labels) -> ThresholdSweep:
    """HTER at thresholds 0.00, 0.01, ..., 1.00; lowest threshold wins ties."""
    p = np.asarray(probabilities, dtype=np.float64)
    y = _labels(labels)
    _require_both(y)
    ts = threshold_grid()
    curve = np.array([hter(confusion_counts(np.where(p >= t, 1, -1), y)) for t in ts])
    best = int(np.argmin(curve))
    return ThresholdSweep(float(ts[best]), best, ts, curve)


def average_threshold(fold_thresholds: Sequence[float]) -> float:
    """Mean of per-fold optimal thresholds.

    Thresholds sit on the 0.01 grid, so the mean is taken over integer grid
    steps to avoid accumulating binary rounding error.
    """
    steps = [int(round(t * THRESHOLD_STEPS)) for t in fold_thresholds]
    if not steps:
        raise ValueError("no fold thresholds to average")
    return sum(steps) / (THRESHOLD_STEPS * len(steps))


@dataclass
class GridResult:
    best_c: float
    best_g: float
    best_hter: float
    c_grid: tuple[float, ...]
    g_grid: tuple[float, ...]
    # hter[i, j] for c_grid[i], g_grid[j]; NaN marks a cell whose training failed
    hter: np.ndarray
    errors: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "best": {"c": self.best_c, "g": self.best_g, "hter": self.best_hter},
            "c_grid": list(self.c_grid),
            "g_grid": list(self.g_grid),
            "hter": [[None if np.isnan(v) else float(v) for v in row] for row in self.hter],
            "errors": {f"{c!r},{g!r}": msg for (c, g), msg in self.errors.items()},
        }


def grid_search(train_x, train_y, val_x, val_y,
                c_grid: Sequence[float] = DEFAULT_C_GRID,
                g_grid: Sequence[float] = DEFAULT_G_GRID,
                base: SvmConfig | None = None,
                seed: int = 0,
                trainer: Callable | None = None) -> GridResult:
    """Validation HTER for every ``(c, g)`` cell; argmin with lowest-(c, g) ties.

    ``trainer(x, y, cfg, seed)`` defaults to :func:`train_svm`. Cells are
    classified with ``base.threshold``.
    """
    if len(c_grid) == 0 or len(g_grid) == 0:
        raise ValueError("grids must be non-empty")
    base = base or SvmConfig()
    trainer = trainer or train_svm
    c_grid = tuple(sorted(float(c) for c in c_grid))
    g_grid = tuple(sorted(float(g) for g in g_grid))
    val_y = _labels(val_y)
    grid = np.full((len(c_grid), len(g_grid)), np.nan)
    errors = {}
    for i, c in enumerate(c_grid):
        for j, g in enumerate(g_grid):
            cfg = SvmConfig(c=c, g=g, tolerance=base.tolerance, max_passes=base.max_passes,
                            threshold=base.threshold, platt_cv=base.platt_cv)
            try:
                model = trainer(train_x, train_y, cfg, seed)
                pred = model.classify(np.asarray(val_x))
                grid[i, j] = hter(confusion_counts(pred, val_y))
            except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
                log.warning("grid cell c=%g g=%g failed: %s", c, g, exc)
                errors[(c, g)] = str(exc)
    if np.all(np.isnan(grid)):
        raise ValueError("every grid cell failed to train")
    # row-major argmin over sorted grids = lowest c, then lowest g
    flat = int(np.nanargmin(grid))
    i, j = divmod(flat, len(g_grid))
    return GridResult(c_grid[i], g_grid[j], float(grid[i, j]), c_grid, g_grid, grid, errors)
