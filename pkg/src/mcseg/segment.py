"""Microcalcification segmenters.

Two competing methods run on the enhanced raster:

* adaptive thresholding: a two-Gaussian fit per tile histogram, a
  precision-weighted threshold between the two means, and bilinear
  interpolation of tile thresholds into a per-pixel field;
* marker-controlled watershed on the Sobel gradient magnitude.

Both start from :func:`suppress_background`, which removes the slowly varying
tissue background with a white top-hat and then smooths with opening and
closing by reconstruction.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import ndimage as ndi

from .analysis import label_components
from .errors import (
    AllForeground,
    DegenerateFit,
    EmptyMarkers,
    NoForegroundMarkers,
    NoTissue,
    TooFewSamples,
)
from .morph import (
    StructuringElement,
    close_by_reconstruction,
    distance_transform,
    impose_minima,
    neighbor_offsets,
    open_by_reconstruction,
    opening,
    regional_maxima,
    subtract,
)
from .prep import otsu_threshold
from .raster import Histogram, check_same_shape, histogram


# -- two-Gaussian histogram fit ----------------------------------------------

@dataclass(frozen=True)
class ThresholdFieldParams:
    tile: int = 256
    stride: int = 128
    em_max_iter: int = 200
    em_tol: float = 1e-6
    sigma_floor: float = 1e-4
    min_tile_pixels: int = 1024
    bins: int = 256

    def __post_init__(self):
        if min(self.tile, self.stride, self.em_max_iter, self.min_tile_pixels, self.bins) < 1:
            raise ValueError("threshold parameters must be positive")
        if self.stride > self.tile:
            raise ValueError("stride must not exceed tile")
        if not (self.em_tol > 0 and self.sigma_floor > 0):
            raise ValueError("em_tol and sigma_floor must be positive")


@dataclass(frozen=True)
class GaussianPairFit:
    c1: float
    c2: float
    sigma1: float
    sigma2: float
    w1: float
    w2: float
    converged: bool
    iterations: int
    loglik_trace: tuple[float, ...] = field(default=(), repr=False, compare=False)


def _log_normal(x, mean, sigma):
    return -0.5 * ((x - mean) / sigma) ** 2 - np.log(sigma) - 0.5 * np.log(2 * np.pi)


def _weighted_moments(x, wts, floor):
    total = wts.sum()
    mean = (wts * x).sum() / total
    sigma = max(np.sqrt((wts * (x - mean) ** 2).sum() / total), floor)
    return mean, sigma


def fit_two_gaussians(h: Histogram, p: ThresholdFieldParams | None = None) -> GaussianPairFit:
    """Fit a two-component 1-D Gaussian mixture to histogram data by EM.

    Bin centers are the samples and counts their weights. Components start
    from the two halves of the histogram split at its median bin, with equal
    mixing weights. Standard deviations never drop below ``sigma_floor``.
    """
    p = p or ThresholdFieldParams()
    total = h.total
    if total < p.min_tile_pixels:
        raise TooFewSamples(f"{total} samples < {p.min_tile_pixels}")
    keep = h.counts > 0
    x = h.bin_centers[keep]
    n = h.counts[keep].astype(np.float64)
    median_bin = int(np.searchsorted(np.cumsum(n), total / 2.0))
    left, right = slice(0, median_bin + 1), slice(median_bin + 1, None)
    if n[right].sum() == 0:
        raise DegenerateFit("histogram mass sits in a single bin")
    mean = np.empty(2)
    sigma = np.empty(2)
    mean[0], sigma[0] = _weighted_moments(x[left], n[left], p.sigma_floor)
    mean[1], sigma[1] = _weighted_moments(x[right], n[right], p.sigma_floor)
    weight = np.array([0.5, 0.5])

    trace = []
    converged = False
    it = 0
    for it in range(1, p.em_max_iter + 1):
        logp = _log_normal(x[:, None], mean, sigma) + np.log(weight)
        norm = np.logaddexp(logp[:, 0], logp[:, 1])
        trace.append(float((n * norm).sum()))
        resp = np.exp(logp - norm[:, None]) * n[:, None]
        mass = resp.sum(axis=0)
        if np.any(mass <= 0):
            raise DegenerateFit("a mixture component lost all its mass")
        weight = mass / total
        for k in range(2):
            mean[k], sigma[k] = _weighted_moments(x, resp[:, k], p.sigma_floor)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= p.em_tol * total:
            converged = True
            break
    if abs(mean[1] - mean[0]) < p.em_tol:
        raise DegenerateFit("mixture means collapsed together")
    lo, hi = (0, 1) if mean[0] <= mean[1] else (1, 0)
    return GaussianPairFit(float(mean[lo]), float(mean[hi]), float(sigma[lo]), float(sigma[hi]),
                           float(weight[lo]), float(weight[hi]), converged, it, tuple(trace))


def threshold_eq5(fit: GaussianPairFit) -> float:
    """Precision-weighted mean of the two component means.

    ``T = (c1/s1 + c2/s2) / (1/s1 + 1/s2)``; always within ``[c1, c2]``.
    """
    a, b = 1.0 / fit.sigma1, 1.0 / fit.sigma2
    t = (fit.c1 * a + fit.c2 * b) / (a + b)
    return float(min(max(t, fit.c1), fit.c2))


# -- adaptive threshold field -------------------------------------------------

@dataclass(frozen=True)
class ThresholdField:
    values: np.ndarray          # per-pixel threshold
    global_threshold: float | None
    tile_thresholds: np.ndarray  # (rows, cols) grid of tile thresholds
    fallback_tiles: int


def _tile_starts(lo: int, hi: int, tile: int, stride: int) -> list[int]:
    if hi - lo <= tile:
        return [lo]
    starts = list(range(lo, hi - tile + 1, stride))
    if starts[-1] + tile < hi:
        starts.append(hi - tile)
    return starts


def _fit_threshold(r, within, p) -> float:
    return threshold_eq5(fit_two_gaussians(histogram(r, within, p.bins), p))


def threshold_field(r: np.ndarray, breast: np.ndarray,
                    p: ThresholdFieldParams | None = None) -> ThresholdField:
    """Per-pixel thresholds from tile-wise two-Gaussian fits over the breast bounding box.

    Tiles that are too small or degenerate fall back to the whole-breast
    threshold. If that fit is degenerate as well, the fallback is a value
    above every intensity so those tiles detect nothing.
    """
    p = p or ThresholdFieldParams()
    r = np.asarray(r, dtype=np.float64)
    breast = np.asarray(breast, dtype=bool)
    check_same_shape(r, breast)
    if not breast.any():
        raise NoTissue("breast mask is empty")

    above_all = float(r.max()) + 1.0
    try:
        global_t = _fit_threshold(r, breast, p)
    except (TooFewSamples, DegenerateFit):
        global_t = None
    fallback = above_all if global_t is None else global_t

    rows = np.flatnonzero(breast.any(axis=1))
    cols = np.flatnonzero(breast.any(axis=0))
    ys = _tile_starts(rows[0], rows[-1] + 1, p.tile, p.stride)
    xs = _tile_starts(cols[0], cols[-1] + 1, p.tile, p.stride)
    grid = np.empty((len(ys), len(xs)))
    cy = np.empty(len(ys))
    cx = np.empty(len(xs))
    n_fallback = 0
    for i, y0 in enumerate(ys):
        y1 = min(y0 + p.tile, rows[-1] + 1)
        cy[i] = 0.5 * (y0 + y1 - 1)
        for j, x0 in enumerate(xs):
            x1 = min(x0 + p.tile, cols[-1] + 1)
            cx[j] = 0.5 * (x0 + x1 - 1)
            sub = breast[y0:y1, x0:x1]
            try:
                if sub.sum() < p.min_tile_pixels:
                    raise TooFewSamples
                grid[i, j] = _fit_threshold(r[y0:y1, x0:x1], sub, p)
            except (TooFewSamples, DegenerateFit):
                grid[i, j] = fallback
                n_fallback += 1

    # separable bilinear interpolation, clamped beyond the outer tile centres
    h, w = r.shape
    along_x = np.array([np.interp(np.arange(w), cx, row) for row in grid])
    values = np.array([np.interp(np.arange(h), cy, col) for col in along_x.T]).T
    return ThresholdField(values, global_t, grid, n_fallback)


def adaptive_threshold_segment(r: np.ndarray, breast: np.ndarray,
                               p: ThresholdFieldParams | None = None) -> np.ndarray:
    """Pixels brighter than their local threshold, restricted to the breast."""
    tf = threshold_field(r, breast, p)
    return (np.asarray(r) > tf.values) & np.asarray(breast, dtype=bool)


# -- watershed ----------------------------------------------------------------

@dataclass(frozen=True)
class WatershedParams:
    se_radius: int = 1
    background_radius: int = 10
    min_marker_area: int = 2
    otsu_bins: int = 256
    conn: int = 8

    def __post_init__(self):
        if self.se_radius < 1 or self.background_radius < 1 or self.min_marker_area < 1:
            raise ValueError("watershed radii and min_marker_area must be >= 1")


@dataclass(frozen=True)
class MarkerSet:
    foreground: np.ndarray
    background: np.ndarray

    def __post_init__(self):
        fg = np.asarray(self.foreground, dtype=bool)
        bg = np.asarray(self.background, dtype=bool)
        check_same_shape(fg, bg)
        if np.any(fg & bg):
            raise ValueError("foreground and background markers overlap")
        object.__setattr__(self, "foreground", fg)
        object.__setattr__(self, "background", bg)


@dataclass(frozen=True)
class LabelMap:
    """Watershed basins; 0 marks ridge lines, labels ``1..n_foreground`` grew from foreground markers."""

    labels: np.ndarray
    n_foreground: int = 0
    n_background: int = 0

    @property
    def ridges(self) -> np.ndarray:
        if self.n_foreground + self.n_background == 0:
            return np.zeros(self.labels.shape, dtype=bool)
        return self.labels == 0

    @property
    def foreground(self) -> np.ndarray:
        return (self.labels >= 1) & (self.labels <= self.n_foreground)


def sobel_gradient(r: np.ndarray) -> np.ndarray:
    """Sobel gradient magnitude with replicate padding."""
    r = np.asarray(r, dtype=np.float64)
    gx = ndi.sobel(r, axis=1, mode="nearest")
    gy = ndi.sobel(r, axis=0, mode="nearest")
    return np.hypot(gx, gy)


@numba.njit(cache=True)
def _priority_flood(surface, labels, nbrs):
    h, w = surface.shape
    nn = nbrs.shape[0]
    queued = labels > 0
    heap = [(0.0, np.int64(0), np.int64(0))]
    heap.pop()
    counter = 0
    # seeds: neighbours of marker pixels, markers visited in row-major order
    for y in range(h):
        for x in range(w):
            if labels[y, x] > 0:
                for k in range(nn):
                    yy = y + nbrs[k, 0]
                    xx = x + nbrs[k, 1]
                    if 0 <= yy < h and 0 <= xx < w and not queued[yy, xx]:
                        queued[yy, xx] = True
                        heapq.heappush(heap, (surface[yy, xx], np.int64(counter), np.int64(yy * w + xx)))
                        counter += 1
    while len(heap) > 0:
        item = heapq.heappop(heap)
        y = item[2] // w
        x = item[2] % w
        lab = 0
        ridge = False
        for k in range(nn):
            yy = y + nbrs[k, 0]
            xx = x + nbrs[k, 1]
            if 0 <= yy < h and 0 <= xx < w:
                other = labels[yy, xx]
                if other > 0:
                    if lab == 0:
                        lab = other
                    elif other != lab:
                        ridge = True
        if ridge:
            continue
        labels[y, x] = lab
        for k in range(nn):
            yy = y + nbrs[k, 0]
            xx = x + nbrs[k, 1]
            if 0 <= yy < h and 0 <= xx < w and not queued[yy, xx]:
                queued[yy, xx] = True
                heapq.heappush(heap, (surface[yy, xx], np.int64(counter), np.int64(yy * w + xx)))
                counter += 1
    return labels


def watershed(gradient: np.ndarray, markers: MarkerSet, conn: int = 8) -> LabelMap:
    """Marker-controlled watershed by priority flooding.

    Minima are imposed at the union of all markers. Each foreground component
    and each background component is a separate label (foreground first, each
    group numbered in row-major first-encounter order). Unlabeled pixels are
    flooded in increasing imposed-surface order, ties first-in first-out;
    a pixel that sees two different labels when popped becomes ridge (0) and
    does not propagate.
    """
    check_same_shape(gradient, markers.foreground)
    union = markers.foreground | markers.background
    if not union.any():
        raise EmptyMarkers("watershed needs at least one marker")
    surface = impose_minima(gradient, union, conn)
    fg_labels, n_fg = label_components(markers.foreground, conn)
    bg_labels, n_bg = label_components(markers.background, conn)
    labels = np.where(bg_labels > 0, bg_labels + n_fg, fg_labels).astype(np.int64)
    labels = _priority_flood(surface, labels, neighbor_offsets(conn))
    return LabelMap(labels, n_fg, n_bg)


def remove_small_components(m: np.ndarray, min_area: int, conn: int = 8) -> np.ndarray:
    labels, n = label_components(m, conn)
    if n == 0:
        return np.asarray(m, dtype=bool)
    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    keep = sizes >= min_area
    keep[0] = False
    return keep[labels]


def suppress_background(r: np.ndarray, p: WatershedParams | None = None) -> np.ndarray:
    """White top-hat followed by opening then closing by reconstruction."""
    p = p or WatershedParams()
    r = np.asarray(r, dtype=np.float64)
    detail = subtract(r, opening(r, StructuringElement.disk(p.background_radius)))
    se = StructuringElement.disk(p.se_radius)
    return close_by_reconstruction(open_by_reconstruction(detail, se, p.conn), se, p.conn)


def compute_markers(r: np.ndarray, breast: np.ndarray, p: WatershedParams | None = None) -> MarkerSet:
    """Foreground markers at bright regional maxima; background markers on the SKIZ of bright areas.

    The brightness cut is the Otsu level of the histogram of regional-maximum
    pixels inside the breast. Tissue pixels vastly outnumber calcification
    pixels, so Otsu over every breast pixel would split the background noise
    instead. Foreground: regional maxima above that level, minus components
    smaller than ``min_marker_area``. Background: ridge lines of the
    watershed of the distance to above-level areas, plus every pixel outside
    the breast.
    """
    p = p or WatershedParams()
    r = np.asarray(r, dtype=np.float64)
    breast = np.asarray(breast, dtype=bool)
    check_same_shape(r, breast)
    maxima = regional_maxima(r, p.conn) & breast
    if not maxima.any():
        raise NoForegroundMarkers("no regional maxima inside the breast")
    otsu = otsu_threshold(histogram(r, maxima, p.otsu_bins))
    if otsu.degenerate:
        raise NoForegroundMarkers("regional maxima form a single population")
    bright = (r > otsu.level) & breast
    fg = remove_small_components(maxima & bright, p.min_marker_area, p.conn)
    if not fg.any():
        raise NoForegroundMarkers("no bright regional maxima")
    try:
        dist = distance_transform(~bright)
        skiz = watershed(dist, MarkerSet(bright, np.zeros_like(bright)), p.conn).ridges
    except AllForeground:
        skiz = np.zeros_like(bright)
    return MarkerSet(fg, (skiz | ~breast) & ~fg)


def watershed_segment(r: np.ndarray, breast: np.ndarray,
                      p: WatershedParams | None = None) -> tuple[np.ndarray, LabelMap]:
    """Full marker-controlled watershed segmentation.

    Returns the union of foreground basins (within the breast) and the label
    map. An image without foreground markers yields an empty mask and an
    all-zero label map.
    """
    p = p or WatershedParams()
    breast = np.asarray(breast, dtype=bool)
    smooth = suppress_background(r, p)
    try:
        markers = compute_markers(smooth, breast, p)
    except NoForegroundMarkers:
        empty = np.zeros(breast.shape, dtype=bool)
        return empty, LabelMap(np.zeros(breast.shape, dtype=np.int64))
    lm = watershed(sobel_gradient(smooth), markers, p.conn)
    return lm.foreground & breast, lm
