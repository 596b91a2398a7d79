"""Seeded synthetic mammogram phantoms with planted microcalcifications."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SpecInfeasible

FILM_LEVEL = 0.05
TISSUE_RANGE = (0.3, 0.6)
MIN_DIM = 128


@dataclass(frozen=True)
class PhantomSpec:
    blob_count: int = 10
    sigma_range: tuple[float, float] = (1.0, 3.0)
    contrast_range: tuple[float, float] = (0.1, 0.25)
    noise_sigma: float = 0.01
    salt_pepper_fraction: float = 0.001
    edge_margin: int = 16  # min distance from blob centre to the breast edge


@dataclass(frozen=True)
class Blob:
    x: int
    y: int
    sigma: float
    contrast: float


@dataclass(frozen=True)
class Phantom:
    image: np.ndarray
    truth: np.ndarray
    breast: np.ndarray
    blobs: tuple[Blob, ...] = field(default=())


def _tissue_background(rng, shape, breast):
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    bg = np.zeros(shape)
    for _ in range(6):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        s = rng.uniform(0.15, 0.35) * min(h, w)
        bg += rng.uniform(0.5, 1.0) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
    vals = bg[breast]
    lo, hi = TISSUE_RANGE
    return lo + (hi - lo) * (bg - vals.min()) / max(vals.max() - vals.min(), 1e-12)


def generate_phantom(seed: int, spec: PhantomSpec | None = None,
                     dims: tuple[int, int] = (512, 512)) -> Phantom:
    """Build a reproducible phantom of shape ``dims`` (height, width).

    A half-ellipse of smooth tissue (intensities ~0.3-0.6) sits against the
    left edge on dark film. Gaussian blobs are planted inside the tissue,
    then Gaussian texture noise and salt-and-pepper impulses are added.
    Ground truth is every pixel within two sigmas of a blob centre.
    """
    spec = spec or PhantomSpec()
    h, w = dims
    if h < MIN_DIM or w < MIN_DIM:
        raise SpecInfeasible(f"phantom dims must be >= {MIN_DIM}x{MIN_DIM}")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w]

    cy = h / 2 + rng.uniform(-0.05, 0.05) * h
    semi_x = rng.uniform(0.8, 0.95) * w
    semi_y = rng.uniform(0.40, 0.47) * h
    ellipse = (xx / semi_x) ** 2 + ((yy - cy) / semi_y) ** 2
    breast = ellipse <= 1.0
    tissue = _tissue_background(rng, dims, breast)
    clean = np.where(breast, tissue, FILM_LEVEL)

    # conservative inside test: scaled ellipse shrunk by the margin
    inner = ((xx / (semi_x - spec.edge_margin)) ** 2
             + ((yy - cy) / (semi_y - spec.edge_margin)) ** 2) <= 1.0
    candidates = np.flatnonzero(inner & (xx >= spec.edge_margin))
    blobs: list[Blob] = []
    attempts = 0
    while len(blobs) < spec.blob_count:
        attempts += 1
        if attempts > 1000 * max(spec.blob_count, 1) or candidates.size == 0:
            raise SpecInfeasible(f"placed {len(blobs)} of {spec.blob_count} blobs without overlap")
        idx = candidates[rng.integers(candidates.size)]
        y, x = divmod(int(idx), w)
        sigma = rng.uniform(*spec.sigma_range)
        if any(np.hypot(x - b.x, y - b.y) <= 2 * (sigma + b.sigma) + 2 for b in blobs):
            continue
        blobs.append(Blob(x, y, float(sigma), float(rng.uniform(*spec.contrast_range))))

    truth = np.zeros(dims, dtype=bool)
    image = clean.copy()
    for b in blobs:
        d2 = (xx - b.x) ** 2 + (yy - b.y) ** 2
        image += b.contrast * np.exp(-d2 / (2 * b.sigma ** 2))
        truth |= d2 <= (2 * b.sigma) ** 2
    for b in blobs:
        assert abs(image[b.y, b.x] - clean[b.y, b.x] - b.contrast) < 1e-3

    image = image + rng.normal(0.0, spec.noise_sigma, dims)
    impulses = rng.random(dims) < spec.salt_pepper_fraction
    image[impulses] = rng.integers(0, 2, int(impulses.sum())).astype(np.float64)
    return Phantom(np.clip(image, 0.0, 1.0), truth, breast, tuple(blobs))
