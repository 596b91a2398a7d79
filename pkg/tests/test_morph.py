import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mcseg.errors import AllForeground, DimensionMismatch, EmptyMarkers, MarkerExceedsMask
from mcseg.morph import (
    StructuringElement,
    close_by_reconstruction,
    closing,
    dilate,
    distance_transform,
    erode,
    fill_holes,
    impose_minima,
    open_by_reconstruction,
    opening,
    reconstruct_by_dilation,
    reconstruct_by_erosion,
    regional_maxima,
    regional_minima,
    subtract,
)

import oracles

dyadic = arrays(np.float64, st.tuples(st.integers(3, 12), st.integers(3, 12)),
                elements=st.integers(0, 256).map(lambda k: k / 256))


def quantized(rng, shape, levels=256):
    return rng.integers(0, levels + 1, shape) / levels


def test_structuring_elements():
    assert set(StructuringElement.disk(1).offsets) == {(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)}
    assert len(StructuringElement.disk(2).offsets) == 13
    assert len(StructuringElement.rect(3, 3).offsets) == 9
    even = StructuringElement.rect(4, 2)
    assert {dx for _, dx in even.offsets} == {-1, 0, 1, 2}
    assert {dy for dy, _ in even.offsets} == {0, 1}
    assert StructuringElement.disk(3).is_symmetric()
    assert not even.is_symmetric()
    with pytest.raises(ValueError):
        StructuringElement(())
    with pytest.raises(ValueError):
        StructuringElement.connectivity(6)


def test_dilate_erode_examples(rng):
    se = StructuringElement.rect(3, 3)
    c = np.full((6, 6), 0.3)
    np.testing.assert_array_equal(dilate(c, StructuringElement.disk(2)), c)
    np.testing.assert_array_equal(erode(c, StructuringElement.disk(2)), c)

    r = np.zeros((7, 7))
    r[3, 3] = 1
    expected = np.zeros((7, 7))
    expected[2:5, 2:5] = 1
    np.testing.assert_array_equal(dilate(r, se), expected)
    np.testing.assert_array_equal(erode(1 - r, se), 1 - expected)


@pytest.mark.parametrize("se", [StructuringElement.disk(2), StructuringElement.rect(4, 3),
                                StructuringElement.rect(1, 5)])
def test_dilate_erode_brute_force(rng, se):
    r = rng.random((8, 8))
    np.testing.assert_array_equal(dilate(r, se), oracles.window_extreme(r, se.offsets, max))
    np.testing.assert_array_equal(erode(r, se), oracles.window_extreme(r, se.offsets, min))


def test_duality_50_rasters(rng):
    se = StructuringElement.disk(2)
    for _ in range(50):
        r = quantized(rng, (10, 13))
        np.testing.assert_array_equal(erode(r, se), 1 - dilate(1 - r, se))
        np.testing.assert_array_equal(opening(r, se), 1 - closing(1 - r, se))


def test_open_close_examples(rng):
    se = StructuringElement.rect(3, 3)
    c = np.full((5, 5), 0.7)
    np.testing.assert_array_equal(opening(c, se), c)
    peak = np.zeros((7, 7))
    peak[3, 3] = 1
    assert not opening(peak, se).any()
    for _ in range(50):
        r = rng.random((9, 9))
        assert np.all(opening(r, se) <= r) and np.all(r <= closing(r, se))


@settings(max_examples=60, deadline=None)
@given(dyadic, st.integers(0, 2))
def test_opening_closing_idempotent(r, radius):
    se = StructuringElement.disk(radius)
    o = opening(r, se)
    np.testing.assert_array_equal(opening(o, se), o)
    c = closing(r, se)
    np.testing.assert_array_equal(closing(c, se), c)


def test_subtract_examples():
    a = np.array([[0.3, 0.8]])
    np.testing.assert_array_equal(subtract(a, a), 0)
    np.testing.assert_array_equal(subtract(a, np.zeros_like(a)), a)
    assert subtract(np.array([[0.3]]), np.array([[0.5]]))[0, 0] == 0.0
    with pytest.raises(DimensionMismatch):
        subtract(a, np.zeros((2, 2)))


def test_reconstruction_examples():
    mask = np.zeros((8, 8))
    mask[1:4, 1:4] = 0.9
    mask[5:7, 4:7] = 0.7
    marker = np.zeros((8, 8))
    marker[2, 2] = 0.9
    out = reconstruct_by_dilation(marker, mask)
    expected = np.where(mask == 0.9, 0.9, 0.0)
    np.testing.assert_array_equal(out, expected)
    np.testing.assert_array_equal(out, oracles.reconstruct_naive(marker, mask))
    np.testing.assert_array_equal(reconstruct_by_dilation(mask, mask), mask)
    with pytest.raises(MarkerExceedsMask):
        reconstruct_by_dilation(mask + 0.1, mask)
    with pytest.raises(DimensionMismatch):
        reconstruct_by_dilation(marker, mask[:4])


@pytest.mark.parametrize("conn", [4, 8])
def test_reconstruction_matches_fixpoint(rng, conn):
    for _ in range(20):
        mask = quantized(rng, (16, 16), 8)
        marker = np.minimum(mask, quantized(rng, (16, 16), 8) * (rng.random((16, 16)) < 0.1))
        out = reconstruct_by_dilation(marker, mask, conn)
        np.testing.assert_array_equal(out, oracles.reconstruct_naive(marker, mask, conn))
        np.testing.assert_array_equal(reconstruct_by_dilation(out, mask, conn), out)
        up = np.maximum(mask, quantized(rng, (16, 16), 8))
        np.testing.assert_array_equal(reconstruct_by_erosion(up, mask, conn),
                                      oracles.reconstruct_erosion_naive(up, mask, conn))


def test_open_by_reconstruction_keeps_blob_drops_speck():
    r = np.zeros((16, 16))
    r[3:10, 3:11] = 0.8
    r[3, 11] = 0.8  # ragged edge the plain opening would shave off
    r[13, 13] = 0.6  # isolated speck
    se = StructuringElement.disk(1)
    out = open_by_reconstruction(r, se)
    expected = r.copy()
    expected[13, 13] = 0
    np.testing.assert_array_equal(out, expected)
    np.testing.assert_array_equal(out, oracles.reconstruct_naive(erode(r, se), r))
    assert opening(r, se)[3, 11] == 0  # standard opening erodes the boundary


def test_by_reconstruction_constant_and_idempotent(rng):
    se = StructuringElement.disk(2)
    c = np.full((9, 9), 0.25)
    np.testing.assert_array_equal(open_by_reconstruction(c, se), c)
    np.testing.assert_array_equal(close_by_reconstruction(c, se), c)
    for _ in range(20):
        r = quantized(rng, (14, 14), 16)
        o = open_by_reconstruction(r, se)
        np.testing.assert_array_equal(open_by_reconstruction(o, se), o)
        c = close_by_reconstruction(r, se)
        np.testing.assert_array_equal(close_by_reconstruction(c, se), c)
        assert np.all(o <= r) and np.all(r <= c)


def test_regional_maxima_examples():
    r = np.zeros((5, 5))
    r[2, 3] = 1
    np.testing.assert_array_equal(regional_maxima(r), r == 1)
    assert regional_maxima(np.full((4, 4), 0.2)).all()
    two = np.zeros((8, 8))
    two[1:4, 1:4] = 0.9
    two[5:7, 4:7] = 0.7
    np.testing.assert_array_equal(regional_maxima(two), two > 0)
    np.testing.assert_array_equal(regional_maxima(two), oracles.regional_maxima_naive(two))


@pytest.mark.parametrize("conn", [4, 8])
def test_regional_extrema_vs_plateau_oracle(rng, conn):
    for _ in range(30):
        r = quantized(rng, (10, 10), 3)
        np.testing.assert_array_equal(regional_maxima(r, conn), oracles.regional_maxima_naive(r, conn))
        np.testing.assert_array_equal(regional_minima(r, conn), oracles.regional_maxima_naive(-r, conn))


def test_impose_minima_examples(rng):
    g = rng.random((8, 8))
    out = impose_minima(g, np.ones((8, 8), bool))
    assert np.unique(out).size == 1
    marker = np.zeros((8, 8), bool)
    marker[5, 2] = True
    np.testing.assert_array_equal(regional_minima(impose_minima(g, marker)), marker)
    at_min = g == g.min()
    np.testing.assert_array_equal(regional_minima(impose_minima(g, at_min)), at_min)
    with pytest.raises(EmptyMarkers):
        impose_minima(g, np.zeros((8, 8), bool))


def test_impose_minima_vs_naive(rng):
    for _ in range(30):
        g = quantized(rng, (8, 8), 3)
        markers = rng.random((8, 8)) < 0.08
        markers[rng.integers(8), rng.integers(8)] = True
        np.testing.assert_array_equal(impose_minima(g, markers), oracles.impose_minima_naive(g, markers))


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (9, 9), elements=st.integers(0, 4).map(float)),
       arrays(np.bool_, (9, 9), elements=st.booleans()).filter(lambda m: m.any()),
       st.sampled_from([4, 8]))
def test_impose_minima_minima_are_marker_components(g, markers, conn):
    minima = regional_minima(impose_minima(g, markers, conn), conn)
    np.testing.assert_array_equal(minima, markers)


def _fill_holes_oracle(m):
    h, w = m.shape
    outside = np.zeros_like(m)
    q = deque((y, x) for y in range(h) for x in range(w)
              if (y in (0, h - 1) or x in (0, w - 1)) and not m[y, x])
    for p in q:
        outside[p] = True
    while q:
        y, x = q.popleft()
        for dy, dx in oracles.N4:
            yy, xx = y + dy, x + dx
            if oracles.inside(yy, xx, h, w) and not m[yy, xx] and not outside[yy, xx]:
                outside[yy, xx] = True
                q.append((yy, xx))
    return ~outside


def test_fill_holes(rng):
    rect = np.zeros((8, 8), bool)
    rect[2:6, 1:7] = True
    np.testing.assert_array_equal(fill_holes(rect), rect)
    yy, xx = np.mgrid[0:15, 0:15]
    d2 = (yy - 7) ** 2 + (xx - 7) ** 2
    np.testing.assert_array_equal(fill_holes((d2 <= 36) & (d2 >= 9)), d2 <= 36)
    for _ in range(50):
        m = rng.random((12, 12)) < 0.55
        np.testing.assert_array_equal(fill_holes(m), _fill_holes_oracle(m))


def test_distance_transform_examples(rng):
    np.testing.assert_array_equal(distance_transform(np.zeros((4, 4), bool)), 0)
    m = np.ones((3, 3), bool)
    m[0, 0] = False
    s2, s5 = math.sqrt(2), math.sqrt(5)
    expected = [[0, 1, 2], [1, s2, s5], [2, s5, math.sqrt(8)]]
    np.testing.assert_array_equal(distance_transform(m), expected)
    with pytest.raises(AllForeground):
        distance_transform(np.ones((3, 3), bool))
    for _ in range(30):
        m = rng.random((12, 12)) < 0.85
        m[rng.integers(12), rng.integers(12)] = False
        np.testing.assert_array_equal(distance_transform(m), oracles.edt_naive(m))
