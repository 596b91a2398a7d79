"""Batch pipeline: preprocessing, both segmenters, statistics and the JSON report."""

from __future__ import annotations

import json
import logging
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .analysis import cluster_regions, dice, label_components, region_stats
from .config import PipelineConfig
from .errors import McsegError, NoForegroundMarkers
from .prep import generate_breast_mask, median_filter, unsharp_mask
from .raster import load_image, save_mask, save_overlay, save_ridges
from .segment import (
    LabelMap,
    compute_markers,
    sobel_gradient,
    suppress_background,
    threshold_field,
    watershed,
)
from .wavelet import wavelet_enhance

log = logging.getLogger(__name__)

REPORT_VERSION = 1
IMAGE_SUFFIXES = (".pgm", ".png")

_MS = {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}}
_REGION = {
    "type": "object",
    "required": ["label", "area_px", "area_mm2", "centroid", "mean_intensity", "bbox", "cluster_id"],
    "properties": {
        "label": {"type": "integer", "minimum": 1},
        "area_px": {"type": "integer", "minimum": 1},
        "area_mm2": {"type": "number", "minimum": 0},
        "centroid": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "mean_intensity": {"type": "number"},
        "bbox": {"type": "array", "items": {"type": "integer"}, "minItems": 4, "maxItems": 4},
        "cluster_id": {"type": "integer", "minimum": 0},
    },
}
_METHOD = {
    "type": "object",
    "required": ["method", "status", "region_count", "cluster_count", "regions",
                 "wall_time_ms", "dice", "outputs"],
    "properties": {
        "method": {"enum": ["adaptive", "watershed"]},
        "status": {"enum": ["ok", "no_markers"]},
        "region_count": {"type": "integer", "minimum": 0},
        "cluster_count": {"type": "integer", "minimum": 0},
        "regions": {"type": "array", "items": _REGION},
        "thresholds": {"type": "object"},
        "markers": {"type": "object"},
        "wall_time_ms": _MS,
        "dice": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
        "outputs": {"type": "object", "additionalProperties": {"type": "string"}},
    },
}
REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["version", "created", "config_echo", "images", "comparison"],
    "properties": {
        "version": {"const": REPORT_VERSION},
        "created": {"type": "string"},
        "config_echo": {"type": "object"},
        "images": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["path", "status", "breast_area_px", "methods"],
                "properties": {
                    "path": {"type": "string"},
                    "status": {"enum": ["ok", "error"]},
                    "error": {"type": ["string", "null"]},
                    "breast_area_px": {"type": ["integer", "null"], "minimum": 0},
                    "sampling_microns": {"type": ["number", "null"]},
                    "wall_time_ms": _MS,
                    "methods": {"type": "array", "items": _METHOD},
                },
            },
        },
        "comparison": {
            "type": "object",
            "required": ["dice_winner_per_image", "median_wall_time_per_method"],
            "properties": {
                "dice_winner_per_image": {"type": "array"},
                "median_wall_time_per_method": _MS,
            },
        },
    },
}


class StageTimer:
    """Monotonic per-stage wall times in milliseconds."""

    def __init__(self):
        self.ms: dict[str, float] = {}

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.ms[name] = self.ms.get(name, 0.0) + (time.perf_counter() - t0) * 1000.0

    def total(self) -> dict[str, float]:
        return {**self.ms, "total": sum(self.ms.values())}


def find_inputs(paths) -> list[Path]:
    """Expand directories into their PGM/PNG files, sorted by name."""
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out.extend(sorted(q for q in p.iterdir()
                              if q.is_file() and q.suffix.lower() in IMAGE_SUFFIXES))
        else:
            out.append(p)
    return out


def find_truth(gt_dir: Path | None, image: Path) -> Path | None:
    if gt_dir is None:
        return None
    for suffix in IMAGE_SUFFIXES:
        cand = Path(gt_dir) / f"{image.stem}{suffix}"
        if cand.is_file():
            return cand
    return None


def _segment_adaptive(enhanced, breast, cfg, timer):
    with timer.stage("smooth"):
        smooth = suppress_background(enhanced, cfg.watershed)
    with timer.stage("threshold"):
        tf = threshold_field(smooth, breast, cfg.threshold)
        mask = (smooth > tf.values) & breast
    info = {"thresholds": {
        "global": tf.global_threshold,
        "tiles": [[round(float(v), 6) for v in row] for row in tf.tile_thresholds],
        "fallback_tiles": tf.fallback_tiles,
    }}
    return mask, None, "ok", info


def _segment_watershed(enhanced, breast, cfg, timer):
    with timer.stage("smooth"):
        smooth = suppress_background(enhanced, cfg.watershed)
    try:
        with timer.stage("markers"):
            markers = compute_markers(smooth, breast, cfg.watershed)
    except NoForegroundMarkers:
        empty = np.zeros(breast.shape, dtype=bool)
        return empty, LabelMap(np.zeros(breast.shape, dtype=np.int64)), "no_markers", {
            "markers": {"foreground": 0, "background": 0}}
    with timer.stage("gradient"):
        grad = sobel_gradient(smooth)
    with timer.stage("watershed"):
        lm = watershed(grad, markers)
        mask = lm.foreground & breast
    return mask, lm, "ok", {"markers": {"foreground": lm.n_foreground, "background": lm.n_background}}


SEGMENTERS = {"adaptive": _segment_adaptive, "watershed": _segment_watershed}


def process_image(path: Path, cfg: PipelineConfig, out_dir: Path,
                  gt_path: Path | None = None) -> dict:
    """Run the full pipeline on one image and write its artifacts. Never raises McsegError."""
    record = {"path": str(path), "status": "ok", "error": None, "breast_area_px": None,
              "sampling_microns": None, "wall_time_ms": {}, "methods": []}
    timer = StageTimer()
    try:
        with timer.stage("load"):
            raster = load_image(path)
            truth = load_image(gt_path).data > 0.5 if gt_path is not None else None
        record["sampling_microns"] = raster.meta.sampling_microns
        with timer.stage("median"):
            denoised = median_filter(raster.data, cfg.median_w, cfg.median_h)
        with timer.stage("mask"):
            breast = generate_breast_mask(denoised, cfg.maskgen)
        record["breast_area_px"] = int(breast.sum())
        with timer.stage("unsharp"):
            sharpened = unsharp_mask(denoised, cfg.unsharp, breast)
        with timer.stage("wavelet"):
            enhanced = wavelet_enhance(sharpened, breast, cfg.enhance_gains)
        record["wall_time_ms"] = timer.total()

        for method in cfg.methods:
            mt = StageTimer()
            mask, lm, status, info = SEGMENTERS[method](enhanced, breast, cfg, mt)
            labels, _ = label_components(mask, 8)
            stats = region_stats(labels, enhanced, raster.meta.sampling_microns)
            n_clusters, cluster_ids = cluster_regions(stats, cfg.cluster_radius_mm,
                                                      raster.meta.sampling_microns)
            outputs = {"mask": f"{path.stem}_{method}_mask.png",
                       "overlay": f"{path.stem}_{method}_overlay.png"}
            save_mask(mask, out_dir / outputs["mask"])
            save_overlay(raster.data, mask, out_dir / outputs["overlay"])
            if lm is not None:
                outputs["ridges"] = f"{path.stem}_{method}_ridges.png"
                save_ridges(raster.data, lm.ridges & breast, out_dir / outputs["ridges"])
            record["methods"].append({
                "method": method,
                "status": status,
                "region_count": len(stats),
                "cluster_count": n_clusters,
                "regions": [{**s.to_dict(), "cluster_id": c} for s, c in zip(stats, cluster_ids)],
                **info,
                "wall_time_ms": mt.total(),
                "dice": None if truth is None else dice(mask, truth),
                "outputs": outputs,
            })
    except McsegError as exc:
        log.warning("%s: %s", path, exc)
        record.update(status="error", error=f"{type(exc).__name__}: {exc}")
    return record


def _worker(args):
    return process_image(*args)


def compare_methods(images: list[dict]) -> dict:
    winners = []
    times: dict[str, list[float]] = {}
    for img in images:
        scores = {}
        for m in img["methods"]:
            times.setdefault(m["method"], []).append(m["wall_time_ms"]["total"])
            if m["dice"] is not None:
                scores[m["method"]] = m["dice"]
        winner = None
        if len(scores) == 2:
            a, w = scores["adaptive"], scores["watershed"]
            winner = "tie" if a == w else ("watershed" if w > a else "adaptive")
        winners.append({"path": img["path"], "winner": winner})
    return {"dice_winner_per_image": winners,
            "median_wall_time_per_method": {k: statistics.median(v) for k, v in times.items()}}


def run_pipeline(cfg: PipelineConfig, inputs, out_dir, gt_dir=None, jobs: int | None = None) -> dict:
    """Process every input image and write ``report.json`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = find_inputs(inputs)
    tasks = [(p, cfg, out_dir, find_truth(Path(gt_dir) if gt_dir else None, p)) for p in paths]
    jobs = jobs or os.cpu_count() or 1
    if jobs == 1 or len(tasks) <= 1:
        images = [_worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            images = list(pool.map(_worker, tasks))
    report = {
        "version": REPORT_VERSION,
        "created": datetime.now(timezone.utc).isoformat(),
        "config_echo": cfg.echo(),
        "images": images,
        "comparison": compare_methods(images),
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2))
    return report


def mask_timing(report: dict) -> dict:
    """Copy of a report with timestamps and wall times blanked, for determinism checks."""
    def scrub(node):
        if isinstance(node, dict):
            return {k: (None if k in ("wall_time_ms", "created", "median_wall_time_per_method")
                        else scrub(v)) for k, v in node.items()}
        if isinstance(node, list):
            return [scrub(v) for v in node]
        return node
    return scrub(report)
