"""Normalised channel histograms and the 8-D histogram detection feature."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channels import ChannelPlanes, Plane

CHANNELS = ("h", "s", "dc", "bc")
DEFAULT_BINS = 200
# Bin counts swept when studying histogram resolution.
BIN_SWEEP = tuple(range(200, 261, 5)) + (256,)

HISTDUMP_COLUMNS = ("channel", "bin_index", "bin_center", "natural_mass", "fake_mass", "abs_diff")


@dataclass(frozen=True)
class Histogram:
    bins: np.ndarray
    channel: str
    lo: float
    hi: float

    @property
    def k(self) -> int:
        return len(self.bins)

    def centers(self) -> np.ndarray:
        width = (self.hi - self.lo) / self.k
        return self.lo + width * (np.arange(self.k) + 0.5)


@dataclass(frozen=True)
class ClassDistributions:
    natural: dict[str, Histogram]
    fake: dict[str, Histogram]


@dataclass(frozen=True)
class DistinctiveBins:
    h: int
    s: int
    dc: int
    bc: int

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.h, self.s, self.dc, self.bc)

    @classmethod
    def from_sequence(cls, values: Sequence[int]) -> "DistinctiveBins":
        h, s, dc, bc = (int(v) for v in values)
        return cls(h, s, dc, bc)


@dataclass(frozen=True)
class HistConfig:
    bins: tuple[int, int, int, int] = (DEFAULT_BINS,) * 4
    pooling: str = "pool"

    def __post_init__(self):
        if len(self.bins) != 4 or any(int(k) < 2 for k in self.bins):
            raise ValueError(f"need four bin counts >= 2, got {self.bins!r}")
        if self.pooling not in ("pool", "average"):
            raise ValueError(f"pooling must be 'pool' or 'average', got {self.pooling!r}")
        object.__setattr__(self, "bins", tuple(int(k) for k in self.bins))

    @classmethod
    def uniform(cls, k: int, pooling: str = "pool") -> "HistConfig":
        return cls(bins=(k, k, k, k), pooling=pooling)


# Values derived from 8-bit pixels are rationals with denominators of at most
# 6 * 255, so a value that is not on a bin edge sits at least ~1e-4 of a bin
# away from one. Rounding in the colour conversion can leave an exact edge a
# few ulps low; this slack snaps it back to the bin the exact value belongs to.
EDGE_SLACK = 1e-9


def bin_indices(values: np.ndarray, k: int, lo: float, hi: float) -> np.ndarray:
    t = (np.asarray(values, dtype=np.float64) - lo) / (hi - lo) * k
    idx = np.floor(t + EDGE_SLACK).astype(np.int64)
    return np.clip(idx, 0, k - 1)


def histogram_counts(plane: Plane, k: int) -> np.ndarray:
    if plane.size == 0:
        raise ValueError("empty input plane")
    if k < 2:
        raise ValueError(f"bin count must be >= 2, got {k}")
    idx = bin_indices(plane.values.ravel(), k, plane.lo, plane.hi)
    return np.bincount(idx, minlength=k).astype(np.float64)


def normalized_histogram(plane: Plane, k: int = DEFAULT_BINS, channel: str = "h") -> Histogram:
    """Fraction of pixels falling in each of ``k`` equal-width bins.

    Values equal to the upper end of the range go to the last bin.
    """
    counts = histogram_counts(plane, k)
    return Histogram(counts / plane.size, channel, plane.lo, plane.hi)


def image_histograms(planes: ChannelPlanes, bins: Sequence[int]) -> dict[str, Histogram]:
    return {
        ch: normalized_histogram(p, k, ch)
        for ch, p, k in zip(CHANNELS, planes, bins)
    }


def _class_histograms(members: list[ChannelPlanes], bins, pooling: str) -> dict[str, Histogram]:
    out = {}
    for c, ch in enumerate(CHANNELS):
        k = bins[c]
        planes = [list(p)[c] for p in members]
        if pooling == "pool":
            # fixed summation order keeps the reduction reproducible
            counts = np.zeros(k)
            total = 0
            for p in planes:
                counts += histogram_counts(p, k)
                total += p.size
            mass = counts / total
        else:
            mass = np.zeros(k)
            for p in planes:
                mass += histogram_counts(p, k) / p.size
            mass /= len(planes)
        out[ch] = Histogram(mass, ch, planes[0].lo, planes[0].hi)
    return out


def class_distributions(planes: Sequence[ChannelPlanes], labels: Sequence[int],
                        cfg: HistConfig | None = None) -> ClassDistributions:
    """Class-level histograms per channel; labels are +1 (fake) / -1 (natural)."""
    cfg = cfg or HistConfig()
    labels = [int(v) for v in labels]
    if len(labels) != len(planes):
        raise ValueError("planes and labels differ in length")
    natural = [p for p, y in zip(planes, labels) if y < 0]
    fake = [p for p, y in zip(planes, labels) if y > 0]
    if not natural or not fake:
        raise ValueError("class has no images")
    return ClassDistributions(
        natural=_class_histograms(natural, cfg.bins, cfg.pooling),
        fake=_class_histograms(fake, cfg.bins, cfg.pooling),
    )


def most_distinctive_bin(dist_n: Histogram, dist_f: Histogram) -> int:
    """Index maximising ``|dist_n - dist_f|``; the lowest index wins ties."""
    a = np.asarray(getattr(dist_n, "bins", dist_n), dtype=np.float64)
    b = np.asarray(getattr(dist_f, "bins", dist_f), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"histograms differ in bin count: {a.shape[0]} vs {b.shape[0]}")
    return int(np.argmax(np.abs(a - b)))


def total_variation(hist) -> float:
    """Sum of absolute first differences across adjacent bins."""
    bins = np.asarray(getattr(hist, "bins", hist), dtype=np.float64)
    if bins.size < 2:
        raise ValueError("total variation needs at least two bins")
    return float(np.sum(np.abs(np.diff(bins))))


def distinctive_bins(dists: ClassDistributions) -> DistinctiveBins:
    return DistinctiveBins(*(most_distinctive_bin(dists.natural[ch], dists.fake[ch]) for ch in CHANNELS))


def feature_from_histograms(hists: dict[str, Histogram], upsilon: DistinctiveBins) -> np.ndarray:
    feat = []
    for ch, idx in zip(CHANNELS, upsilon.as_tuple()):
        bins = hists[ch].bins
        if not 0 <= idx < len(bins):
            raise ValueError(f"distinctive bin {idx} out of range for channel {ch} with {len(bins)} bins")
        feat.append(bins[idx])
        feat.append(total_variation(bins))
    return np.array(feat, dtype=np.float64)


def hist_feature(planes: ChannelPlanes, upsilon: DistinctiveBins,
                 bins: Sequence[int] = (DEFAULT_BINS,) * 4) -> np.ndarray:
    """8-vector ``[h(1), h(2), s(1), s(2), dc(1), dc(2), bc(1), bc(2)]``.

    Component (1) is the image's histogram mass at the class-level
    distinctive bin, component (2) the histogram's total variation.
    """
    return feature_from_histograms(image_histograms(planes, bins), upsilon)


def histdump_rows(dists: ClassDistributions) -> list[dict]:
    rows = []
    for ch in CHANNELS:
        n, f = dists.natural[ch], dists.fake[ch]
        for i, (center, a, b) in enumerate(zip(n.centers(), n.bins, f.bins)):
            rows.append({
                "channel": ch,
                "bin_index": i,
                "bin_center": float(center),
                "natural_mass": float(a),
                "fake_mass": float(b),
                "abs_diff": float(abs(a - b)),
            })
    return rows


def write_histdump(dists: ClassDistributions, path) -> list[dict]:
    rows = histdump_rows(dists)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=HISTDUMP_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return rows
