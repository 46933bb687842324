"""Seeded synthetic corpus of natural images and pseudo-colorized twins.

A fake twin keeps the natural image's value channel but has its saturation
scaled by ``1 - strength`` and its hue pulled toward a small palette, which
mimics the washed-out, peaky hue statistics of automatic colorization.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .channels import hsv_to_rgb_array, rgb_to_hsv_array
from .dataset import DatasetManifest, FcidError, ManifestEntry, write_manifest
from .evaluation import split_half

PALETTE_SIZE = 6
DEFAULT_SIZE = 64


def _random_color(rng: np.random.Generator) -> np.ndarray:
    h = rng.random()
    s = rng.uniform(0.35, 1.0)
    v = rng.uniform(0.45, 1.0)
    return hsv_to_rgb_array(h, s, v)


def render_natural(rng: np.random.Generator, size: int = DEFAULT_SIZE) -> np.ndarray:
    """Gradient background, a few flat shapes and a noise texture."""
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    angle = rng.uniform(0, 2 * np.pi)
    t = (np.cos(angle) * xx + np.sin(angle) * yy)
    t = (t - t.min()) / max(np.ptp(t), 1e-12)
    c0, c1 = _random_color(rng), _random_color(rng)
    img = c0[None, None, :] * (1 - t[..., None]) + c1[None, None, :] * t[..., None]

    for _ in range(rng.integers(2, 6)):
        color = _random_color(rng)
        cx, cy = rng.uniform(0, 1, size=2)
        rx, ry = rng.uniform(0.08, 0.35, size=2)
        if rng.random() < 0.5:
            mask = (np.abs(xx - cx) <= rx) & (np.abs(yy - cy) <= ry)
        else:
            mask = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
        img[mask] = color

    # low-frequency texture plus pixel noise
    coarse = rng.normal(0, 10, size=(size // 8 + 2, size // 8 + 2, 1))
    texture = np.kron(coarse, np.ones((8, 8, 1)))[:size, :size]
    img = img + texture + rng.normal(0, 4, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def colorize_fake(natural: np.ndarray, strength: float, palette: np.ndarray) -> np.ndarray:
    """Desaturate and palette-quantise the hue of ``natural``."""
    if not 0.0 <= strength <= 1.0:
        raise ValueError(f"strength must lie in [0, 1], got {strength!r}")
    h, s, v = rgb_to_hsv_array(natural)
    # signed circular distance from each hue to every palette hue
    d = (palette[None, :] - h.reshape(-1, 1) + 0.5) % 1.0 - 0.5
    nearest = d[np.arange(d.shape[0]), np.argmin(np.abs(d), axis=1)].reshape(h.shape)
    h2 = (h + strength * nearest) % 1.0
    s2 = s * (1.0 - strength)
    rgb = hsv_to_rgb_array(h2, s2, v)
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def synth_generate(out_dir, n_pairs: int, strength: float = 0.4, seed: int = 0,
                   size: int = DEFAULT_SIZE) -> DatasetManifest:
    """Write ``n_pairs`` natural/fake PNG pairs and their manifests.

    Produces ``manifest.csv`` with every entry plus a pair-preserving
    ``train.csv`` / ``test.csv`` half split.
    """
    if n_pairs < 1:
        raise ValueError(f"n_pairs must be >= 1, got {n_pairs}")
    out = Path(out_dir)
    try:
        (out / "natural").mkdir(parents=True, exist_ok=True)
        (out / "fake").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise FcidError(f"cannot create output directory {out}: {exc}", stage="synth") from exc

    palette = np.sort(np.random.default_rng([seed, 0xC0105]).random(PALETTE_SIZE))
    entries = []
    for i in range(n_pairs):
        rng = np.random.default_rng([seed, i])
        nat = render_natural(rng, size)
        fake = colorize_fake(nat, strength, palette)
        pid = f"p{i:05d}"
        nat_path = out / "natural" / f"{pid}.png"
        fake_path = out / "fake" / f"{pid}.png"
        try:
            Image.fromarray(nat).save(nat_path)
            Image.fromarray(fake).save(fake_path)
        except OSError as exc:
            raise FcidError(f"cannot write images to {out}: {exc}", stage="synth") from exc
        entries.append(ManifestEntry(nat_path, "natural", pid))
        entries.append(ManifestEntry(fake_path, "fake", pid))

    manifest = DatasetManifest(tuple(entries))
    write_manifest(manifest, out / "manifest.csv")
    if n_pairs >= 2:
        a, b = split_half(len(entries), seed, manifest.groups)
        write_manifest(manifest.subset(a), out / "train.csv")
        write_manifest(manifest.subset(b), out / "test.csv")
    return manifest
