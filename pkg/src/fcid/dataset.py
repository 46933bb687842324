"""Manifest CSV handling and image decoding."""

from __future__ import annotations

import csv
import hashlib
import logging
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

LABELS = {"natural": -1, "fake": 1}
MANIFEST_COLUMNS = ("path", "label", "pair_id")
_GRAY_MODES = {"1", "L", "LA", "I", "I;16", "I;16B", "I;16L", "F"}


class FcidError(Exception):
    """Pipeline failure tagged with the stage that raised it."""

    def __init__(self, message: str, stage: str = "pipeline"):
        super().__init__(message)
        self.stage = stage

    def __str__(self):
        return f"{self.stage}: {self.args[0]}"


class ManifestError(FcidError):
    def __init__(self, message: str):
        super().__init__(message, stage="manifest")


@contextmanager
def stage(name: str):
    """Re-raise any error from the block as an :class:`FcidError` for ``name``."""
    try:
        yield
    except FcidError:
        raise
    except (ValueError, OSError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise FcidError(str(exc), stage=name) from exc


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    label: str
    pair_id: str | None = None

    @property
    def y(self) -> int:
        return LABELS[self.label]


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def paths(self) -> list[Path]:
        return [e.path for e in self.entries]

    @property
    def labels(self) -> np.ndarray:
        return np.array([e.y for e in self.entries], dtype=np.int64)

    @property
    def groups(self) -> list[str | None]:
        return [e.pair_id for e in self.entries]

    def subset(self, indices: Iterable[int]) -> "DatasetManifest":
        return DatasetManifest(tuple(self.entries[i] for i in indices))


def validate_entries(entries: list[ManifestEntry], lines: list[int] | None = None):
    lines = lines or list(range(2, len(entries) + 2))
    seen = {}
    pairs: dict[str, list[str]] = {}
    for line, e in zip(lines, entries):
        key = str(e.path)
        if key in seen:
            raise ManifestError(f"line {line}: duplicate path {key} (first seen on line {seen[key]})")
        seen[key] = line
        if e.label not in LABELS:
            raise ManifestError(f"line {line}: label must be 'natural' or 'fake', got {e.label!r}")
        if e.pair_id:
            pairs.setdefault(e.pair_id, []).append(e.label)
    for pid, labels in pairs.items():
        if sorted(labels) != ["fake", "natural"]:
            raise ManifestError(f"pair {pid!r} must link exactly one natural and one fake entry, has {labels}")


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    """Read a ``path,label,pair_id`` CSV; relative paths resolve against its folder."""
    path = Path(path)
    base = path.parent
    with open(path, newline="") as fh:
        text = fh.read()
    if not text.strip():
        raise ManifestError("empty manifest")
    reader = csv.reader(text.splitlines())
    header = [h.strip() for h in next(reader)]
    if header[:2] != ["path", "label"] or len(header) > 3 or (len(header) == 3 and header[2] != "pair_id"):
        raise ManifestError(f"line 1: expected header 'path,label,pair_id', got {','.join(header)!r}")
    entries, lines, missing = [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < 2 or len(row) > len(header):
            raise ManifestError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        p = row[0].strip()
        if not p:
            raise ManifestError(f"line {lineno}: empty path")
        label = row[1].strip().lower()
        pair = row[2].strip() if len(row) > 2 and row[2].strip() else None
        full = Path(p) if Path(p).is_absolute() else base / p
        entries.append(ManifestEntry(full, label, pair))
        lines.append(lineno)
        if check_files and not full.is_file():
            missing.append(f"line {lineno}: {p}")
    if not entries:
        raise ManifestError("empty manifest")
    validate_entries(entries, lines)
    if missing:
        raise ManifestError("missing image files: " + "; ".join(missing))
    return DatasetManifest(tuple(entries))


def write_manifest(manifest: DatasetManifest, path, relative_to=None):
    path = Path(path)
    base = Path(relative_to) if relative_to is not None else path.parent
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for e in manifest.entries:
            try:
                p = e.path.relative_to(base)
            except ValueError:
                p = e.path
            w.writerow([p.as_posix(), e.label, e.pair_id or ""])


def load_image(path) -> tuple[np.ndarray, bool]:
    """Decode to an ``(h, w, 3)`` uint8 array; the flag marks grayscale sources."""
    with Image.open(path) as im:
        im.load()
        gray = im.mode in _GRAY_MODES
        if gray:
            arr = np.asarray(im.convert("L"))
            rgb = np.repeat(arr[:, :, None], 3, axis=2)
        else:
            rgb = np.asarray(im.convert("RGB"))
    if gray:
        log.warning("%s is grayscale; zero-saturation input is degenerate for detection", path)
    return np.ascontiguousarray(rgb, dtype=np.uint8), gray


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
