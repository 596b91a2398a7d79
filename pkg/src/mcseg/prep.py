"""Preprocessing: breast masking, median denoising and unsharp enhancement."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage as ndi

from .errors import NoTissue
from .morph import StructuringElement, conn_structure, dilate, erode, fill_holes
from .raster import Histogram, check_same_shape, histogram


@dataclass(frozen=True)
class UnsharpParams:
    window_m: int = 11  # columns
    window_n: int = 11  # rows
    weight_k: float = 0.8

    def __post_init__(self):
        for side in (self.window_m, self.window_n):
            if side < 3 or side % 2 == 0:
                raise ValueError("unsharp windows must be odd and >= 3")
        if not self.weight_k >= 0:
            raise ValueError("weight_k must be >= 0")


@dataclass(frozen=True)
class MaskGenParams:
    otsu_bins: int = 256
    close_radius: int = 5
    min_area_fraction: float = 0.01

    def __post_init__(self):
        if self.otsu_bins < 2 or self.close_radius < 1:
            raise ValueError("otsu_bins must be >= 2 and close_radius >= 1")
        if not 0 < self.min_area_fraction < 1:
            raise ValueError("min_area_fraction must lie in (0, 1)")


class OtsuResult(NamedTuple):
    level: float
    bin_index: int
    degenerate: bool


def otsu_threshold(h: Histogram) -> OtsuResult:
    """Otsu's threshold over a histogram.

    Class 0 is bins ``0..t``; the returned level is the upper edge of the bin
    ``t`` maximizing the between-class variance, ties going to the smallest
    ``t``. Scores are compared exactly in integer arithmetic, with bin indices
    standing in for intensities (the argmax is invariant to that affine map).
    """
    counts = [int(c) for c in h.counts]
    n_total = sum(counts)
    if n_total <= 0:
        raise ValueError("otsu_threshold needs a non-empty histogram")
    s_total = sum(i * c for i, c in enumerate(counts))
    edges = h.bin_edges

    best_t, best_num, best_den = -1, 0, 1
    n0 = s0 = 0
    for t in range(len(counts) - 1):
        n0 += counts[t]
        s0 += t * counts[t]
        n1 = n_total - n0
        if n0 == 0 or n1 == 0:
            continue
        # sigma_B^2 * N^2 = (s0*n1 - s1*n0)^2 / (n0*n1)
        num = (s0 * n1 - (s_total - s0) * n0) ** 2
        den = n0 * n1
        if best_t < 0 or num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    if best_t < 0 or best_num == 0:
        occupied = int(np.flatnonzero(h.counts)[0])
        return OtsuResult(float(edges[occupied + 1]), occupied, True)
    return OtsuResult(float(edges[best_t + 1]), best_t, False)


def largest_component(m: np.ndarray, conn: int = 8) -> np.ndarray:
    labels, n = ndi.label(m, structure=conn_structure(conn))
    if n == 0:
        return np.zeros_like(m, dtype=bool)
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    return labels == int(np.argmax(sizes))


def generate_breast_mask(r: np.ndarray, p: MaskGenParams | None = None) -> np.ndarray:
    """Separate breast tissue from the dark film background.

    Otsu binarization, largest 8-connected component, closing with a disk,
    then hole filling.
    """
    p = p or MaskGenParams()
    r = np.asarray(r, dtype=np.float64)
    otsu = otsu_threshold(histogram(r, bin_count=p.otsu_bins))
    if otsu.degenerate:
        raise NoTissue("image has a single intensity population")
    tissue = largest_component(r > otsu.level)
    min_area = p.min_area_fraction * r.size
    if tissue.sum() < min_area:
        raise NoTissue(f"largest tissue component has {int(tissue.sum())} px, need {min_area:.0f}")
    se = StructuringElement.disk(p.close_radius)
    closed = erode(dilate(tissue.astype(np.uint8), se), se).astype(bool)
    return largest_component(fill_holes(closed, conn=4))


def median_filter(r: np.ndarray, w: int = 4, h: int = 4) -> np.ndarray:
    """Median over a ``w`` x ``h`` window with replicate padding.

    The window spans offsets ``-(n-1)//2 .. n//2`` along each axis, so a
    4-wide window covers {-1, 0, 1, 2}. Even-sized windows return the lower
    of the two middle order statistics.
    """
    if w < 1 or h < 1:
        raise ValueError("median window sides must be >= 1")
    rank = (w * h - 1) // 2
    # scipy centres a size-n window at n // 2; shift so offsets start at -(n-1)//2
    origin = (-((h + 1) % 2), -((w + 1) % 2))
    return ndi.rank_filter(np.asarray(r, dtype=np.float64), rank, size=(h, w),
                           mode="nearest", origin=origin)


def fill_outside(r: np.ndarray, within: np.ndarray) -> np.ndarray:
    """Replace pixels outside ``within`` by the value of the nearest pixel inside it.

    Removes the tissue/film step before linear filtering so that enhancement
    does not ring along the breast border.
    """
    within = np.asarray(within, dtype=bool)
    if within.all() or not within.any():
        return np.asarray(r, dtype=np.float64)
    _, (iy, ix) = ndi.distance_transform_edt(~within, return_indices=True)
    return np.asarray(r, dtype=np.float64)[iy, ix]


def local_mean(r: np.ndarray, window_m: int, window_n: int) -> np.ndarray:
    return ndi.uniform_filter(np.asarray(r, dtype=np.float64), size=(window_n, window_m),
                              mode="nearest")


def unsharp_mask(r: np.ndarray, p: UnsharpParams | None = None,
                 within: np.ndarray | None = None) -> np.ndarray:
    """``r + K * (r - local_mean)`` inside ``within``, clamped to [0, 1].

    Pixels outside ``within`` are copied unchanged and, for the local mean,
    stand in as their nearest tissue value.
    """
    p = p or UnsharpParams()
    r = np.asarray(r, dtype=np.float64)
    if within is None:
        within = np.ones(r.shape, dtype=bool)
    check_same_shape(r, within)
    mean = local_mean(fill_outside(r, within), p.window_m, p.window_n)
    sharpened = r + p.weight_k * (r - mean)
    return np.clip(np.where(within, sharpened, r), 0.0, 1.0)
