"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` to see the lines as
they happen; they are also repeated in the terminal summary.
"""

import json
import shutil
import statistics
import subprocess
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from mcseg.config import PipelineConfig
from mcseg.morph import (
    StructuringElement,
    close_by_reconstruction,
    closing,
    dilate,
    distance_transform,
    erode,
    open_by_reconstruction,
    opening,
    reconstruct_by_dilation,
    reconstruct_by_erosion,
)
from mcseg.phantom import PhantomSpec, generate_phantom
from mcseg.pipeline import REPORT_SCHEMA, mask_timing, run_pipeline
from mcseg.prep import otsu_threshold
from mcseg.raster import Histogram, save_mask, write_pgm
from mcseg.segment import GaussianPairFit, MarkerSet, threshold_eq5, watershed
from mcseg.wavelet import dwt2_forward, dwt2_inverse, padded_shape

import oracles

pytestmark = pytest.mark.acceptance


def test_dwt_perfect_reconstruction(record_criterion):
    rng = np.random.default_rng(1)
    shapes = [(64, 64), (512, 384), (256, 256), (65, 97), (511, 383), (127, 300)]
    while len(shapes) < 100:
        shapes.append((int(rng.integers(64, 513)), int(rng.integers(64, 385))))
    shapes[10:20] = [(256, 256)] * 10
    worst, slowest_256 = 0.0, 0.0
    for shape in shapes:
        r = rng.random(shape)
        t0 = time.perf_counter()
        back = dwt2_inverse(dwt2_forward(r, 5))
        elapsed = time.perf_counter() - t0
        if shape == (256, 256):
            slowest_256 = max(slowest_256, elapsed)
        worst = max(worst, float(np.abs(back - r).max()))
    ok = worst < 1e-6 and slowest_256 < 1.0
    record_criterion(1, ok, f"{len(shapes)} rasters, max abs error {worst:.2e} (< 1e-6), "
                            f"slowest 256x256 round trip {slowest_256:.3f} s (< 1 s)")
    assert ok


def test_dwt_energy_preservation(record_criterion):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(50):
        shape = (int(rng.integers(64, 300)), int(rng.integers(64, 300)))
        r = rng.random(shape)
        ph, pw = padded_shape(shape, 5)
        padded = np.pad(r, ((0, ph - shape[0]), (0, pw - shape[1])), mode="symmetric")
        energy = sum(float(np.sum(c ** 2)) for c in dwt2_forward(r, 5).coefficients())
        ref = float(np.sum(padded ** 2))
        worst = max(worst, abs(energy - ref) / ref)
    ok = worst < 1e-9
    record_criterion(2, ok, f"50 rasters, max relative energy error {worst:.2e} (< 1e-9)")
    assert ok


def test_otsu_exhaustive(record_criterion):
    rng = np.random.default_rng(3)
    mismatches = 0
    for i in range(1000):
        bins = int(rng.integers(2, 40))
        if i % 3 == 0:  # sparse, small counts: many exact ties
            counts = rng.integers(0, 3, bins) * (rng.random(bins) < 0.4)
        else:
            counts = rng.integers(0, 50, bins)
        if counts.sum() == 0:
            counts[rng.integers(bins)] = 1
        res = otsu_threshold(Histogram(counts))
        t, score = oracles.otsu_naive([int(c) for c in counts])
        agree = res.degenerate if score == 0 else (not res.degenerate and res.bin_index == t)
        mismatches += not agree
    ok = mismatches == 0
    record_criterion(3, ok, f"1000 histograms, {mismatches} argmax mismatches vs exhaustive search "
                            "(ties -> smallest bin)")
    assert ok


def test_watershed_vs_flooding_oracle(record_criterion):
    rng = np.random.default_rng(4)
    mismatches = 0
    for _ in range(200):
        g = rng.integers(0, 4, (8, 8)).astype(float)
        cells = rng.choice(64, size=4, replace=False)
        fg = np.zeros(64, bool)
        bg = np.zeros(64, bool)
        fg[cells[0]] = True
        bg[cells[1]] = True
        if rng.random() < 0.5:  # occasionally grow a marker to two cells
            (fg if rng.random() < 0.5 else bg)[cells[2]] = True
        fg, bg = fg.reshape(8, 8), bg.reshape(8, 8)
        got = watershed(g, MarkerSet(fg, bg)).labels
        want = oracles.watershed_naive(g, fg, bg)
        mismatches += not (np.array_equal(got, want) and np.array_equal(got == 0, want == 0))
    ok = mismatches == 0
    record_criterion(4, ok, f"200 random 8x8 instances, {mismatches} partition/ridge mismatches")
    assert ok


def test_morphology_suite(record_criterion):
    rng = np.random.default_rng(5)
    failures = []

    def check(name, cond):
        if not cond:
            failures.append(name)

    for _ in range(50):
        r = rng.integers(0, 257, (16, 16)) / 256
        for se in (StructuringElement.disk(1), StructuringElement.disk(2), StructuringElement.rect(3, 5)):
            check("duality erode", np.array_equal(erode(r, se), 1 - dilate(1 - r, se)))
            check("duality open", np.array_equal(opening(r, se), 1 - closing(1 - r, se)))
            check("duality by-rec", np.array_equal(open_by_reconstruction(r, se),
                                                   1 - close_by_reconstruction(1 - r, se)))
            o, c = opening(r, se), closing(r, se)
            check("idempotent open", np.array_equal(opening(o, se), o))
            check("idempotent close", np.array_equal(closing(c, se), c))
            obr, cbr = open_by_reconstruction(r, se), close_by_reconstruction(r, se)
            check("idempotent obr", np.array_equal(open_by_reconstruction(obr, se), obr))
            check("idempotent cbr", np.array_equal(close_by_reconstruction(cbr, se), cbr))
            check("extensivity", np.all(erode(r, se) <= o) and np.all(o <= r) and np.all(r <= c)
                  and np.all(c <= dilate(r, se)) and np.all(obr <= r) and np.all(r <= cbr))
    for conn in (4, 8):
        for _ in range(25):
            mask = rng.integers(0, 9, (16, 16)) / 8
            marker = np.minimum(mask, rng.integers(0, 9, (16, 16)) / 8 * (rng.random((16, 16)) < 0.1))
            check("reconstruction fixpoint", np.array_equal(
                reconstruct_by_dilation(marker, mask, conn), oracles.reconstruct_naive(marker, mask, conn)))
            up = np.maximum(mask, rng.integers(0, 9, (16, 16)) / 8)
            check("dual reconstruction fixpoint", np.array_equal(
                reconstruct_by_erosion(up, mask, conn), oracles.reconstruct_erosion_naive(up, mask, conn)))
    for _ in range(50):
        m = rng.random((12, 12)) < rng.uniform(0.5, 0.95)
        m[rng.integers(12), rng.integers(12)] = False
        check("distance transform", np.array_equal(distance_transform(m), oracles.edt_naive(m)))
    ok = not failures
    record_criterion(5, ok, "duality, idempotence, (anti-)extensivity, reconstruction and distance "
                            f"transform oracles: {len(failures)} failures {sorted(set(failures))}")
    assert ok


def test_threshold_formula(record_criterion):
    rng = np.random.default_rng(6)
    worst_mid = 0.0
    for _ in range(1000):
        c1, c2 = np.sort(rng.uniform(-10, 10, 2))
        s = rng.uniform(1e-4, 5)
        t = threshold_eq5(GaussianPairFit(c1, c2, s, s, 0.5, 0.5, True, 1))
        worst_mid = max(worst_mid, abs(t - (c1 + c2) / 2))
    outside = 0
    for _ in range(10_000):
        c1, c2 = np.sort(rng.uniform(0, 1, 2))
        s1, s2 = 10 ** rng.uniform(-4, 0, 2)
        t = threshold_eq5(GaussianPairFit(c1, c2, s1, s2, 0.5, 0.5, True, 1))
        outside += not (c1 <= t <= c2)
    ok = worst_mid <= 1e-12 and outside == 0
    record_criterion(6, ok, f"equal-sigma midpoint error {worst_mid:.1e} (<= 1e-12); "
                            f"{outside}/10000 thresholds outside [c1, c2]")
    assert ok


def _write_phantoms(root: Path, seeds, dims=(512, 512), blobs=10):
    (root / "images").mkdir(parents=True)
    (root / "truth").mkdir()
    for i, seed in enumerate(seeds):
        ph = generate_phantom(seed, PhantomSpec(blob_count=blobs), dims)
        write_pgm(ph.image, root / "images" / f"phantom_{i:03d}.pgm")
        save_mask(ph.truth, root / "truth" / f"phantom_{i:03d}.png")


@pytest.mark.slow
def test_phantom_study(tmp_path, record_criterion):
    t0 = time.perf_counter()
    _write_phantoms(tmp_path / "data", range(30))
    run_pipeline(PipelineConfig(), [tmp_path / "data" / "images"], tmp_path / "out",
                 tmp_path / "data" / "truth", jobs=1)
    elapsed = time.perf_counter() - t0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    wins, dices = 0, {"adaptive": [], "watershed": []}
    for img in report["images"]:
        score = {m["method"]: m["dice"] for m in img["methods"]}
        dices["adaptive"].append(score["adaptive"])
        dices["watershed"].append(score["watershed"])
        wins += score["watershed"] >= score["adaptive"]
    med = report["comparison"]["median_wall_time_per_method"]
    ok = (len(report["images"]) == 30 and wins >= 21 and med["watershed"] >= med["adaptive"]
          and elapsed < 300)
    record_criterion(7, ok, f"watershed Dice >= adaptive on {wins}/30 (need >= 21); median Dice "
                            f"{statistics.median(dices['watershed']):.3f} vs "
                            f"{statistics.median(dices['adaptive']):.3f}; median wall time "
                            f"{med['watershed']:.0f} ms vs {med['adaptive']:.0f} ms; study {elapsed:.0f} s (< 300 s)")
    assert ok


def _mcseg(*args):
    exe = shutil.which("mcseg")
    cmd = [exe] if exe else [sys.executable, "-m", "mcseg.cli"]
    return subprocess.run([*cmd, *map(str, args)], capture_output=True, text=True)


def test_cli_end_to_end(tmp_path, record_criterion):
    t0 = time.perf_counter()
    gen = _mcseg("phantom", "--seed", 11, "--count", 4, "--out", tmp_path / "ph")
    run = _mcseg("run", "--method", "both", "--input", tmp_path / "ph" / "images",
                 "--gt", tmp_path / "ph" / "truth", "--out", tmp_path / "out")
    elapsed = time.perf_counter() - t0
    out = tmp_path / "out"
    counts = {f"{m}_{kind}": len(list(out.glob(f"*_{m}_{kind}.png")))
              for m in ("adaptive", "watershed") for kind in ("mask", "overlay")}
    try:
        jsonschema.validate(json.loads((out / "report.json").read_text()), REPORT_SCHEMA)
        schema_ok = True
    except (OSError, jsonschema.ValidationError):
        schema_ok = False
    ok = (gen.returncode == 0 and run.returncode == 0 and all(v == 4 for v in counts.values())
          and schema_ok and elapsed < 30)
    record_criterion(8, ok, f"exit codes {gen.returncode}/{run.returncode}, artifacts {counts}, "
                            f"schema valid {schema_ok}, {elapsed:.1f} s (< 30 s)")
    assert ok, run.stderr


def test_determinism_across_jobs(tmp_path, record_criterion):
    _write_phantoms(tmp_path / "data", range(40, 44), dims=(256, 256), blobs=6)
    args = ("--method", "both", "--input", tmp_path / "data" / "images", "--gt", tmp_path / "data" / "truth")
    a = _mcseg("run", *args, "--jobs", 1, "--out", tmp_path / "a")
    b = _mcseg("run", *args, "--jobs", 2, "--out", tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").glob("*.png"))
    same_files = names == sorted(p.name for p in (tmp_path / "b").glob("*.png"))
    masks = [n for n in names if n.endswith("_mask.png")]
    identical = same_files and all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
                                   for n in names)
    ra = mask_timing(json.loads((tmp_path / "a" / "report.json").read_text()))
    rb = mask_timing(json.loads((tmp_path / "b" / "report.json").read_text()))
    ok = a.returncode == 0 and b.returncode == 0 and len(masks) == 8 and identical and ra == rb
    record_criterion(9, ok, f"--jobs 1 vs --jobs 2: {len(masks)} masks, artifacts byte-identical {identical}, "
                            f"timing-masked reports identical {ra == rb}")
    assert ok
