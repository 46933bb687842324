"""Analysis channels of an RGB image: hue, saturation, dark and bright.

The dark channel is the local-patch minimum of the per-pixel channel minimum,
the bright channel the local-patch maximum of the per-pixel channel maximum.
Patches are square windows clipped at the image border.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_PATCH_RADIUS = 7


@dataclass(frozen=True)
class Plane:
    """A single-channel raster with a declared value interval."""

    values: np.ndarray
    lo: float
    hi: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def size(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class ChannelConfig:
    patch_radius: int = DEFAULT_PATCH_RADIUS

    def __post_init__(self):
        if int(self.patch_radius) != self.patch_radius or self.patch_radius < 0:
            raise ValueError(f"patch_radius must be a non-negative integer, got {self.patch_radius!r}")


@dataclass(frozen=True)
class ChannelPlanes:
    hue: Plane
    saturation: Plane
    dark: Plane
    bright: Plane

    def __iter__(self):
        return iter((self.hue, self.saturation, self.dark, self.bright))

    @property
    def shape(self) -> tuple[int, int]:
        return self.hue.shape

    @property
    def n_pixels(self) -> int:
        return self.hue.size


def as_rgb_array(image) -> np.ndarray:
    """Validate and return an ``(h, w, 3)`` uint8 array."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (h, w, 3) RGB array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("image must have at least one pixel")
    if arr.dtype != np.uint8:
        if np.any(arr < 0) or np.any(arr > 255) or np.any(arr != np.round(arr)):
            raise ValueError("RGB components must be integers in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


def rgb_to_hsv_array(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised RGB -> HSV with hue in [0, 1).

    Achromatic pixels (max == min) get hue 0 and saturation 0.
    """
    x = np.asarray(rgb, dtype=np.float64) / 255.0
    r, g, b = x[..., 0], x[..., 1], x[..., 2]
    maxc = np.max(x, axis=-1)
    minc = np.min(x, axis=-1)
    delta = maxc - minc
    chroma = delta > 0

    sat = np.zeros_like(maxc)
    np.divide(delta, maxc, out=sat, where=chroma)

    safe = np.where(chroma, delta, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    hue = np.where(r == maxc, bc - gc, np.where(g == maxc, 2.0 + rc - bc, 4.0 + gc - rc))
    hue = (hue / 6.0) % 1.0
    hue[~chroma] = 0.0
    # float modulo can round tiny negatives up to exactly 1.0
    hue[hue >= 1.0] = 0.0
    return hue, sat, maxc


def rgb_to_hsv(pixel) -> tuple[float, float, float]:
    """Convert one 8-bit ``(r, g, b)`` triple to ``(hue, saturation, value)``."""
    comps = np.asarray(pixel, dtype=np.float64).reshape(1, 1, 3)
    if np.any(comps < 0) or np.any(comps > 255):
        raise ValueError(f"RGB components must lie in [0, 255], got {pixel!r}")
    h, s, v = rgb_to_hsv_array(comps)
    return float(h[0, 0]), float(s[0, 0]), float(v[0, 0])


def hsv_to_rgb_array(hue, sat, val) -> np.ndarray:
    """Inverse of :func:`rgb_to_hsv_array`, returning floats in [0, 255]."""
    h = np.asarray(hue, dtype=np.float64) * 6.0
    s = np.asarray(sat, dtype=np.float64)
    v = np.asarray(val, dtype=np.float64)
    i = np.floor(h).astype(np.int64) % 6
    f = h - np.floor(h)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    choices_r = [v, q, p, p, t, v]
    choices_g = [t, v, v, q, p, p]
    choices_b = [p, p, t, v, v, q]
    r = np.choose(i, choices_r)
    g = np.choose(i, choices_g)
    b = np.choose(i, choices_b)
    return np.stack([r, g, b], axis=-1) * 255.0


def _sliding_extremum_1d(arr: np.ndarray, radius: int, op, fill: float) -> np.ndarray:
    """Centered window extremum along the last axis (van Herk / Gil-Werman).

    Padding with the operator's identity element reproduces border clipping
    exactly. Cost is three comparisons per element regardless of radius.
    """
    n = arr.shape[-1]
    w = 2 * radius + 1
    n_blocks = -(-(n + 2 * radius) // w)
    total = n_blocks * w
    padded = np.full(arr.shape[:-1] + (total,), fill, dtype=arr.dtype)
    padded[..., radius:radius + n] = arr

    blocks = padded.reshape(arr.shape[:-1] + (n_blocks, w))
    prefix = op.accumulate(blocks, axis=-1).reshape(padded.shape)
    suffix = op.accumulate(blocks[..., ::-1], axis=-1)[..., ::-1].reshape(padded.shape)
    # window [i, i + w - 1] in padded coordinates, for i = 0 .. n - 1
    return op(suffix[..., :n], prefix[..., w - 1:w - 1 + n])


def sliding_extremum(plane: Plane, radius: int, mode: str) -> Plane:
    """Exact windowed min or max over a ``(2r+1) x (2r+1)`` clipped patch."""
    if int(radius) != radius or radius < 0:
        raise ValueError(f"radius must be a non-negative integer, got {radius!r}")
    if mode not in ("min", "max"):
        raise ValueError(f"mode must be 'min' or 'max', got {mode!r}")
    values = np.asarray(plane.values, dtype=np.float64)
    if radius == 0:
        return Plane(values.copy(), plane.lo, plane.hi)
    op = np.minimum if mode == "min" else np.maximum
    fill = np.inf if mode == "min" else -np.inf
    out = _sliding_extremum_1d(values, radius, op, fill)
    out = _sliding_extremum_1d(out.T, radius, op, fill).T
    return Plane(np.ascontiguousarray(out), plane.lo, plane.hi)


def extract_channel_planes(image, cfg: ChannelConfig | None = None) -> ChannelPlanes:
    """Compute hue, saturation, dark and bright planes of an RGB image."""
    cfg = cfg or ChannelConfig()
    rgb = as_rgb_array(image)
    hue, sat, _ = rgb_to_hsv_array(rgb)
    pix = rgb.astype(np.float64)
    dark = sliding_extremum(Plane(pix.min(axis=2), 0.0, 255.0), cfg.patch_radius, "min")
    bright = sliding_extremum(Plane(pix.max(axis=2), 0.0, 255.0), cfg.patch_radius, "max")
    return ChannelPlanes(
        hue=Plane(hue, 0.0, 1.0),
        saturation=Plane(sat, 0.0, 1.0),
        dark=dark,
        bright=bright,
    )
