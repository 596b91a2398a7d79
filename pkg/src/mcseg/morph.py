"""Flat grayscale and binary morphology.

All flat operators use replicate padding at the image border, so constant
images are fixpoints. Geodesic reconstruction uses Vincent's hybrid
raster-scan + FIFO algorithm (IEEE TIP 2(2), 1993), compiled with numba.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy import ndimage as ndi

from .errors import AllForeground, EmptyMarkers, MarkerExceedsMask
from .raster import check_same_shape

# Impose-minima sentinel and the intensity quantum added to the surface.
MINIMA_SENTINEL = -1.0
MINIMA_DELTA = 1.0 / 65535


@dataclass(frozen=True)
class StructuringElement:
    """Flat structuring element stored as a set of (dy, dx) offsets."""

    offsets: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not self.offsets:
            raise ValueError("structuring element must be non-empty")
        if (0, 0) not in self.offsets:
            raise ValueError("structuring element must contain the origin")

    @classmethod
    def disk(cls, radius: int) -> "StructuringElement":
        r = int(radius)
        if r < 0:
            raise ValueError("disk radius must be >= 0")
        return cls(tuple((dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)
                         if dx * dx + dy * dy <= r * r))

    @classmethod
    def rect(cls, w: int, h: int) -> "StructuringElement":
        if w < 1 or h < 1:
            raise ValueError("rect sides must be >= 1")
        return cls(tuple((dy, dx) for dy in range(-((h - 1) // 2), h // 2 + 1)
                         for dx in range(-((w - 1) // 2), w // 2 + 1)))

    @classmethod
    def connectivity(cls, conn: int) -> "StructuringElement":
        return cls.rect(3, 3) if check_conn(conn) == 8 else cls(
            ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)))

    @property
    def footprint(self) -> np.ndarray:
        """Odd-sized boolean footprint centered on the origin."""
        rad = max(max(abs(dy), abs(dx)) for dy, dx in self.offsets)
        fp = np.zeros((2 * rad + 1, 2 * rad + 1), dtype=bool)
        for dy, dx in self.offsets:
            fp[rad + dy, rad + dx] = True
        return fp

    def is_symmetric(self) -> bool:
        return set(self.offsets) == {(-dy, -dx) for dy, dx in self.offsets}


def check_conn(conn: int) -> int:
    if conn not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {conn!r}")
    return conn


def conn_structure(conn: int) -> np.ndarray:
    return ndi.generate_binary_structure(2, 1 if check_conn(conn) == 4 else 2)


def dilate(r: np.ndarray, se: StructuringElement) -> np.ndarray:
    """out(p) = max over q in se of r(p + q)."""
    return ndi.maximum_filter(np.asarray(r), footprint=se.footprint, mode="nearest")


def erode(r: np.ndarray, se: StructuringElement) -> np.ndarray:
    """out(p) = min over q in se of r(p + q)."""
    return ndi.minimum_filter(np.asarray(r), footprint=se.footprint, mode="nearest")


def opening(r: np.ndarray, se: StructuringElement) -> np.ndarray:
    return dilate(erode(r, se), se)


def closing(r: np.ndarray, se: StructuringElement) -> np.ndarray:
    return erode(dilate(r, se), se)


def subtract(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise ``max(a - b, 0)``."""
    check_same_shape(a, b)
    return np.maximum(np.asarray(a, dtype=np.float64) - b, 0.0)


# -- geodesic reconstruction ------------------------------------------------

_N8 = np.array([(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)],
               dtype=np.int64)
_N4 = np.array([(-1, 0), (0, -1), (0, 1), (1, 0)], dtype=np.int64)


def neighbor_offsets(conn: int) -> np.ndarray:
    return _N8 if check_conn(conn) == 8 else _N4


@numba.njit(cache=True)
def _reconstruct_dilate(marker, mask, nbrs):
    h, w = mask.shape
    out = marker.copy()
    nn = nbrs.shape[0]
    # forward scan over causal neighbours
    for y in range(h):
        for x in range(w):
            v = out[y, x]
            for k in range(nn):
                dy = nbrs[k, 0]
                dx = nbrs[k, 1]
                if dy < 0 or (dy == 0 and dx < 0):
                    yy = y + dy
                    xx = x + dx
                    if 0 <= yy < h and 0 <= xx < w and out[yy, xx] > v:
                        v = out[yy, xx]
            out[y, x] = min(v, mask[y, x])
    qy = np.empty(h * w, dtype=np.int64)
    qx = np.empty(h * w, dtype=np.int64)
    queued = np.zeros((h, w), dtype=np.bool_)
    head = 0
    tail = 0
    # backward scan over anti-causal neighbours, seeding the FIFO
    for y in range(h - 1, -1, -1):
        for x in range(w - 1, -1, -1):
            v = out[y, x]
            for k in range(nn):
                dy = nbrs[k, 0]
                dx = nbrs[k, 1]
                if dy > 0 or (dy == 0 and dx > 0):
                    yy = y + dy
                    xx = x + dx
                    if 0 <= yy < h and 0 <= xx < w and out[yy, xx] > v:
                        v = out[yy, xx]
            v = min(v, mask[y, x])
            out[y, x] = v
            for k in range(nn):
                dy = nbrs[k, 0]
                dx = nbrs[k, 1]
                if dy > 0 or (dy == 0 and dx > 0):
                    yy = y + dy
                    xx = x + dx
                    if (0 <= yy < h and 0 <= xx < w and out[yy, xx] < v
                            and out[yy, xx] < mask[yy, xx]):
                        qy[tail % (h * w)] = y
                        qx[tail % (h * w)] = x
                        tail += 1
                        queued[y, x] = True
                        break
    while head < tail:
        y = qy[head % (h * w)]
        x = qx[head % (h * w)]
        head += 1
        queued[y, x] = False
        v = out[y, x]
        for k in range(nn):
            yy = y + nbrs[k, 0]
            xx = x + nbrs[k, 1]
            if 0 <= yy < h and 0 <= xx < w:
                if out[yy, xx] < v and out[yy, xx] != mask[yy, xx]:
                    out[yy, xx] = min(v, mask[yy, xx])
                    if not queued[yy, xx]:
                        qy[tail % (h * w)] = yy
                        qx[tail % (h * w)] = xx
                        tail += 1
                        queued[yy, xx] = True
    return out


def reconstruct_by_dilation(marker: np.ndarray, mask: np.ndarray, conn: int = 8) -> np.ndarray:
    """Grayscale reconstruction of ``mask`` from ``marker`` (iterated geodesic dilation)."""
    check_same_shape(marker, mask)
    marker = np.ascontiguousarray(marker, dtype=np.float64)
    mask = np.ascontiguousarray(mask, dtype=np.float64)
    if np.any(marker > mask):
        raise MarkerExceedsMask("marker must be <= mask pointwise")
    return _reconstruct_dilate(marker, mask, neighbor_offsets(conn))


def reconstruct_by_erosion(marker: np.ndarray, mask: np.ndarray, conn: int = 8) -> np.ndarray:
    """Dual reconstruction: marker >= mask, iterated geodesic erosion."""
    check_same_shape(marker, mask)
    marker = np.asarray(marker, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if np.any(marker < mask):
        raise MarkerExceedsMask("marker must be >= mask pointwise for erosion")
    return -reconstruct_by_dilation(-marker, -mask, conn)


def open_by_reconstruction(r: np.ndarray, se: StructuringElement, conn: int = 8) -> np.ndarray:
    """Erode by ``se``, then reconstruct ``r`` from the eroded marker."""
    r = np.asarray(r, dtype=np.float64)
    return reconstruct_by_dilation(erode(r, se), r, conn)


def close_by_reconstruction(r: np.ndarray, se: StructuringElement, conn: int = 8) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    return -open_by_reconstruction(-r, se, conn)


# -- extrema ----------------------------------------------------------------

@numba.njit(cache=True)
def _regional_maxima(r, nbrs):
    h, w = r.shape
    out = np.zeros((h, w), dtype=np.bool_)
    seen = np.zeros((h, w), dtype=np.bool_)
    sy = np.empty(h * w, dtype=np.int64)
    sx = np.empty(h * w, dtype=np.int64)
    members_y = np.empty(h * w, dtype=np.int64)
    members_x = np.empty(h * w, dtype=np.int64)
    nn = nbrs.shape[0]
    for y0 in range(h):
        for x0 in range(w):
            if seen[y0, x0]:
                continue
            v = r[y0, x0]
            top = 0
            count = 0
            sy[0] = y0
            sx[0] = x0
            top = 1
            seen[y0, x0] = True
            is_max = True
            while top > 0:
                top -= 1
                y = sy[top]
                x = sx[top]
                members_y[count] = y
                members_x[count] = x
                count += 1
                for k in range(nn):
                    yy = y + nbrs[k, 0]
                    xx = x + nbrs[k, 1]
                    if 0 <= yy < h and 0 <= xx < w:
                        u = r[yy, xx]
                        if u > v:
                            is_max = False
                        elif u == v and not seen[yy, xx]:
                            seen[yy, xx] = True
                            sy[top] = yy
                            sx[top] = xx
                            top += 1
            if is_max:
                for i in range(count):
                    out[members_y[i], members_x[i]] = True
    return out


def regional_maxima(r: np.ndarray, conn: int = 8) -> np.ndarray:
    """True on connected plateaus whose outside neighbours are all strictly lower."""
    return _regional_maxima(np.ascontiguousarray(r, dtype=np.float64), neighbor_offsets(conn))


def regional_minima(r: np.ndarray, conn: int = 8) -> np.ndarray:
    return regional_maxima(-np.asarray(r, dtype=np.float64), conn)


def impose_minima(g: np.ndarray, markers: np.ndarray, conn: int = 8) -> np.ndarray:
    """Modify ``g`` so its only regional minima are the components of ``markers``.

    Marker pixels are pinned to ``MINIMA_SENTINEL``; every other pixel is
    raised by reconstruction by erosion of ``g + MINIMA_DELTA``.
    """
    check_same_shape(g, markers)
    markers = np.asarray(markers, dtype=bool)
    if not markers.any():
        raise EmptyMarkers("impose_minima needs at least one marker pixel")
    g = np.asarray(g, dtype=np.float64)
    ceiling = float(g.max()) + 1.0
    m = np.where(markers, MINIMA_SENTINEL, ceiling)
    lower = np.minimum(g + MINIMA_DELTA, m)
    return reconstruct_by_erosion(m, lower, conn)


# -- binary helpers ---------------------------------------------------------

def fill_holes(m: np.ndarray, conn: int = 4) -> np.ndarray:
    """Fill background components (``conn``-connected) that do not touch the border."""
    m = np.asarray(m, dtype=bool)
    labels, _ = ndi.label(~m, structure=conn_structure(conn))
    border = np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]]))
    return m | ~np.isin(labels, border)


def distance_transform(m: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance from each pixel to the nearest false pixel."""
    m = np.asarray(m, dtype=bool)
    if m.all():
        raise AllForeground("distance transform needs at least one false pixel")
    return ndi.distance_transform_edt(m)
