"""Connected components, region statistics, clustering and Dice scoring."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage as ndi
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import pdist, squareform

from .morph import conn_structure
from .raster import check_same_shape

MIN_CLUSTER_SIZE = 3


def label_components(m: np.ndarray, conn: int = 8) -> tuple[np.ndarray, int]:
    """Label ``conn``-connected true components 1..N in row-major first-encounter order."""
    labels, n = ndi.label(np.asarray(m, dtype=bool), structure=conn_structure(conn))
    if n == 0:
        return labels.astype(np.int64), 0
    flat = labels.ravel()
    present, first = np.unique(flat, return_index=True)
    order = np.argsort(first[present > 0], kind="stable")
    remap = np.zeros(n + 1, dtype=np.int64)
    remap[present[present > 0][order]] = np.arange(1, n + 1)
    return remap[labels], n


@dataclass(frozen=True)
class RegionStats:
    label: int
    area_px: int
    area_mm2: float
    centroid: tuple[float, float]  # (x, y) in pixels
    mean_intensity: float
    bbox: tuple[int, int, int, int]  # (x0, y0, x1, y1), inclusive

    def to_dict(self) -> dict:
        """JSON-ready dict (tuples become lists)."""
        d = asdict(self)
        d["centroid"], d["bbox"] = list(self.centroid), list(self.bbox)
        return d


def region_stats(labels: np.ndarray, r: np.ndarray, sampling_microns: float = 45.0) -> list[RegionStats]:
    check_same_shape(labels, r)
    labels = np.asarray(labels)
    n = int(labels.max()) if labels.size else 0
    if n <= 0:
        return []
    pixel_mm2 = (sampling_microns / 1000.0) ** 2
    ys, xs = np.indices(labels.shape)
    flat = labels.ravel()
    area = np.bincount(flat, minlength=n + 1)
    sx = np.bincount(flat, weights=xs.ravel(), minlength=n + 1)
    sy = np.bincount(flat, weights=ys.ravel(), minlength=n + 1)
    si = np.bincount(flat, weights=np.asarray(r, dtype=np.float64).ravel(), minlength=n + 1)
    out = []
    for lab, sl in enumerate(ndi.find_objects(labels), start=1):
        if sl is None:
            continue
        a = int(area[lab])
        out.append(RegionStats(
            label=lab,
            area_px=a,
            area_mm2=a * pixel_mm2,
            centroid=(float(sx[lab] / a), float(sy[lab] / a)),
            mean_intensity=float(si[lab] / a),
            bbox=(int(sl[1].start), int(sl[0].start), int(sl[1].stop - 1), int(sl[0].stop - 1)),
        ))
    return out


def cluster_regions(stats: list[RegionStats], radius_mm: float = 5.0,
                    sampling_microns: float = 45.0) -> tuple[int, list[int]]:
    """Single-linkage grouping of region centroids within ``radius_mm``.

    Groups with fewer than three regions are not clusters and get id 0.
    Returns the cluster count and one cluster id per region.
    """
    if radius_mm <= 0:
        raise ValueError("radius_mm must be positive")
    if not stats:
        return 0, []
    pts = np.array([s.centroid for s in stats]) * (sampling_microns / 1000.0)
    adj = squareform(pdist(pts)) <= radius_mm if len(stats) > 1 else np.ones((1, 1), bool)
    _, groups = connected_components(adj, directed=False)
    sizes = np.bincount(groups)
    ids = []
    seen: dict[int, int] = {}
    for g in groups:
        if sizes[g] < MIN_CLUSTER_SIZE:
            ids.append(0)
        else:
            ids.append(seen.setdefault(int(g), len(seen) + 1))
    return len(seen), ids


def dice(a: np.ndarray, b: np.ndarray) -> float:
    check_same_shape(a, b)
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    size = int(a.sum()) + int(b.sum())
    if size == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / size
