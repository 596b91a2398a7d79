"""Raster containers, histograms and image file I/O.

Rasters are 2-D ``float64`` arrays indexed ``[row, col]`` with intensities
normalized to [0, 1] at load time. Binary masks are plain ``bool`` arrays of
the same shape. Only the loaded image carries physical metadata, so it is
wrapped in :class:`Raster`; every processing function takes and returns bare
arrays.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    DimensionMismatch,
    EmptyMask,
    UnreadableFile,
    UnsupportedFormat,
    WriteFailure,
)

DEFAULT_SAMPLING_MICRONS = 45.0
SIDECAR_SUFFIX = ".meta"


@dataclass(frozen=True)
class ImageMeta:
    sampling_microns: float = DEFAULT_SAMPLING_MICRONS
    bit_depth_source: int = 8
    source_path: str = ""

    def __post_init__(self):
        if not self.sampling_microns > 0:
            raise ValueError("sampling_microns must be positive")
        if self.bit_depth_source not in (8, 16):
            raise ValueError("bit_depth_source must be 8 or 16")


@dataclass(frozen=True)
class Raster:
    data: np.ndarray
    meta: ImageMeta = field(default_factory=ImageMeta)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"raster must be a non-empty 2-D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("raster contains non-finite intensities")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class Histogram:
    counts: np.ndarray
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or counts.size < 2:
            raise ValueError("histogram needs at least 2 bins")
        if np.any(counts < 0):
            raise ValueError("histogram counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def bin_count(self) -> int:
        return self.counts.size

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def bin_edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.bin_count + 1)

    @property
    def bin_centers(self) -> np.ndarray:
        edges = self.bin_edges
        return 0.5 * (edges[:-1] + edges[1:])


def check_same_shape(*arrays: np.ndarray) -> None:
    shape = np.shape(arrays[0])
    for a in arrays[1:]:
        if np.shape(a) != shape:
            raise DimensionMismatch(f"shape {np.shape(a)} does not match {shape}")


def histogram(r: np.ndarray, within: np.ndarray | None = None, bin_count: int = 256) -> Histogram:
    """Count intensities of ``r`` in ``bin_count`` uniform bins over [0, 1].

    Value ``v`` falls in bin ``floor(v * bin_count)`` clamped to the valid
    range, so 1.0 lands in the last bin. Pixels outside ``within`` are ignored.
    """
    if bin_count < 2:
        raise ValueError("bin_count must be >= 2")
    values = np.asarray(r, dtype=np.float64)
    if within is not None:
        check_same_shape(values, within)
        values = values[np.asarray(within, dtype=bool)]
        if values.size == 0:
            raise EmptyMask("histogram mask has no true pixels")
    idx = np.clip(np.floor(values.ravel() * bin_count), 0, bin_count - 1).astype(np.int64)
    return Histogram(np.bincount(idx, minlength=bin_count))


# -- file I/O ---------------------------------------------------------------

_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def _read_pgm(raw: bytes, path: Path) -> tuple[np.ndarray, int]:
    if raw[:2] != b"P5":
        raise UnsupportedFormat(f"{path}: only binary (P5) PGM is supported")
    pos = 2
    fields = []
    for _ in range(3):
        m = _PGM_TOKEN.match(raw, pos)
        if m is None:
            raise UnreadableFile(f"{path}: truncated PGM header")
        fields.append(int(m.group(1)))
        pos = m.end()
    width, height, maxval = fields
    pos += 1  # single whitespace byte before the raster
    if maxval < 1 or maxval > 65535:
        raise UnsupportedFormat(f"{path}: unsupported PGM maxval {maxval}")
    depth = 8 if maxval < 256 else 16
    dtype = np.dtype(np.uint8) if depth == 8 else np.dtype(">u2")
    n = width * height
    body = raw[pos:pos + n * dtype.itemsize]
    if len(body) != n * dtype.itemsize:
        raise UnreadableFile(f"{path}: truncated PGM raster")
    return np.frombuffer(body, dtype=dtype).reshape(height, width), depth


def _read_png(path: Path) -> tuple[np.ndarray, int]:
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "L":
                return np.asarray(im, dtype=np.uint8), 8
            if mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(im)
                if arr.min() < 0 or arr.max() > 65535:
                    raise UnsupportedFormat(f"{path}: intensities outside 16-bit range")
                return arr.astype(np.uint16), 16
    except (UnsupportedFormat, UnreadableFile):
        raise
    except Exception as exc:
        raise UnreadableFile(f"{path}: {exc}") from exc
    raise UnsupportedFormat(f"{path}: mode {mode!r} is not single-channel 8/16-bit")


def read_sidecar(path: Path) -> dict[str, str]:
    """Parse ``<image>.meta`` key = value pairs, if the file exists."""
    sidecar = Path(str(path) + SIDECAR_SUFFIX)
    if not sidecar.is_file():
        return {}
    out = {}
    for line in sidecar.read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def load_image(path) -> Raster:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise UnreadableFile(f"{path}: {exc}") from exc
    if raw[:2] in (b"P5", b"P2", b"P6", b"P3"):
        pixels, depth = _read_pgm(raw, path)
    elif raw[:8] == b"\x89PNG\r\n\x1a\n":
        pixels, depth = _read_png(path)
    else:
        raise UnsupportedFormat(f"{path}: not a PGM or PNG file")

    sampling = DEFAULT_SAMPLING_MICRONS
    side = read_sidecar(path)
    if "sampling_microns" in side:
        sampling = float(side["sampling_microns"])
    data = pixels.astype(np.float64) / (2 ** depth - 1)
    return Raster(data, ImageMeta(sampling, depth, str(path)))


def write_pgm(data: np.ndarray, path, bit_depth: int = 16) -> None:
    """Write a [0, 1] raster as a binary PGM, rounding to the nearest level."""
    top = 2 ** bit_depth - 1
    levels = np.rint(np.clip(data, 0.0, 1.0) * top)
    dtype = np.uint8 if bit_depth == 8 else ">u2"
    h, w = levels.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n{top}\n".encode("ascii"))
            fh.write(levels.astype(dtype).tobytes())
    except OSError as exc:
        raise WriteFailure(f"{path}: {exc}") from exc


def _save_png(arr: np.ndarray, path) -> None:
    try:
        Image.fromarray(arr).save(path, format="PNG")
    except (OSError, ValueError) as exc:
        raise WriteFailure(f"{path}: {exc}") from exc


def save_mask(mask: np.ndarray, path) -> None:
    """Write a boolean mask as an 8-bit PNG with true -> 255, false -> 0."""
    _save_png(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8), path)


def mask_boundary(mask: np.ndarray) -> np.ndarray:
    """Mask pixels 8-adjacent to a non-mask pixel; the exterior counts as non-mask."""
    m = np.pad(np.asarray(mask, dtype=bool), 1, constant_values=False)
    interior = np.ones_like(mask, dtype=bool)
    h, w = mask.shape
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            interior &= m[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
    return np.asarray(mask, dtype=bool) & ~interior


def _paint(base: np.ndarray, where: np.ndarray, path) -> None:
    gray = np.rint(np.clip(base, 0.0, 1.0) * 255).astype(np.uint8)
    rgb = np.repeat(gray[:, :, None], 3, axis=2)
    rgb[where] = (255, 0, 0)
    _save_png(rgb, path)


def save_overlay(base: np.ndarray, mask: np.ndarray, path) -> None:
    """Gray RGB rendering of ``base`` with the mask boundary painted pure red."""
    check_same_shape(base, mask)
    _paint(base, mask_boundary(mask), path)


def save_ridges(base: np.ndarray, ridges: np.ndarray, path) -> None:
    """Gray RGB rendering of ``base`` with every ridge pixel painted red."""
    check_same_shape(base, ridges)
    _paint(base, np.asarray(ridges, dtype=bool), path)
