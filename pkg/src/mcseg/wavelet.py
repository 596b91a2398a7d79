"""Separable 2-D Daubechies-8 wavelet transform and detail-band enhancement.

The filter bank is the orthonormal Daubechies wavelet with 8 vanishing
moments (16 taps). Each level filters rows and columns with periodic
extension, which keeps the transform orthonormal: perfect reconstruction and
Parseval hold to rounding error. Images are first mirror-padded on the
bottom/right so both sides are divisible by ``2**levels``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import GainLengthMismatch, InconsistentPyramid, TooManyLevels
from .prep import fill_outside
from .raster import check_same_shape

# Daubechies (1992) table, N = 8; low-pass synthesis filter, sum = sqrt(2).
DB8_LOWPASS = np.array([
    0.05441584224310401,
    0.31287159091429995,
    0.6756307362972898,
    0.5853546836542067,
    -0.015829105256349306,
    -0.2840155429615469,
    0.0004724845739132828,
    0.12874742662047847,
    -0.017369301001807547,
    -0.044088253930794755,
    0.013981027917398282,
    0.008746094047405777,
    -0.004870352993451574,
    -0.00039174037337694705,
    0.0006754494064505693,
    -0.00011747678412476953,
])
DB8_HIGHPASS = np.array([(-1) ** n * DB8_LOWPASS[-1 - n] for n in range(DB8_LOWPASS.size)])

DEFAULT_LEVELS = 5


@dataclass(frozen=True)
class DetailBands:
    horizontal: np.ndarray  # low-pass along x, high-pass along y
    vertical: np.ndarray    # high-pass along x, low-pass along y
    diagonal: np.ndarray

    def scaled(self, gain: float) -> "DetailBands":
        return DetailBands(self.horizontal * gain, self.vertical * gain, self.diagonal * gain)


@dataclass(frozen=True)
class WaveletPyramid:
    approx: np.ndarray
    details: tuple[DetailBands, ...]  # details[0] is level 1 (finest)
    original_dims: tuple[int, int]    # (height, width) before padding

    @property
    def levels(self) -> int:
        return len(self.details)

    @property
    def padded_dims(self) -> tuple[int, int]:
        h, w = self.details[0].horizontal.shape
        return 2 * h, 2 * w

    def coefficients(self) -> list[np.ndarray]:
        out = [self.approx]
        for d in self.details:
            out.extend((d.horizontal, d.vertical, d.diagonal))
        return out

    def validate(self) -> None:
        if not self.details:
            raise InconsistentPyramid("pyramid has no levels")
        ph, pw = self.padded_dims
        if ph % 2 ** self.levels or pw % 2 ** self.levels:
            raise InconsistentPyramid("padded dims are not divisible by 2**levels")
        for j, d in enumerate(self.details, start=1):
            want = (ph >> j, pw >> j)
            for band in (d.horizontal, d.vertical, d.diagonal):
                if band.shape != want:
                    raise InconsistentPyramid(f"level {j} band has shape {band.shape}, want {want}")
        if self.approx.shape != (ph >> self.levels, pw >> self.levels):
            raise InconsistentPyramid("approximation band has the wrong shape")
        oh, ow = self.original_dims
        if not (1 <= oh <= ph and 1 <= ow <= pw):
            raise InconsistentPyramid("original dims exceed padded dims")


@dataclass(frozen=True)
class EnhanceGains:
    detail: tuple[float, ...] = (1.5, 1.5, 1.5, 1.0, 1.0)
    approx_gain: float = 1.0

    def __post_init__(self):
        vals = (*self.detail, self.approx_gain)
        if not all(np.isfinite(v) and v >= 0 for v in vals):
            raise ValueError("gains must be finite and non-negative")


def analyze_axis(x: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """One periodic analysis step along ``axis``: ``a[k] = sum_n h[n] x[(2k+n) mod N]``."""
    x = np.moveaxis(x, axis, -1)
    n = x.shape[-1]
    taps = DB8_LOWPASS.size
    xp = np.take(x, np.arange(n + taps) % n, axis=-1)
    lo = np.zeros(x.shape[:-1] + (n // 2,))
    hi = np.zeros_like(lo)
    for k in range(taps):
        window = xp[..., k:k + n:2]
        lo += DB8_LOWPASS[k] * window
        hi += DB8_HIGHPASS[k] * window
    return np.moveaxis(lo, -1, axis), np.moveaxis(hi, -1, axis)


def synthesize_axis(lo: np.ndarray, hi: np.ndarray, axis: int) -> np.ndarray:
    """Adjoint (= inverse) of :func:`analyze_axis`."""
    lo = np.moveaxis(lo, axis, -1)
    hi = np.moveaxis(hi, axis, -1)
    n = 2 * lo.shape[-1]
    taps = DB8_LOWPASS.size
    acc = np.zeros(lo.shape[:-1] + (n + taps,))
    for k in range(taps):
        acc[..., k:k + n:2] += DB8_LOWPASS[k] * lo + DB8_HIGHPASS[k] * hi
    # fold the periodic overhang back onto the start (repeatedly when n < taps)
    out = acc[..., :n].copy()
    for start in range(n, n + taps, n):
        tail = acc[..., start:start + n]
        out[..., :tail.shape[-1]] += tail
    return np.moveaxis(out, -1, axis)


def padded_shape(shape: tuple[int, int], levels: int) -> tuple[int, int]:
    step = 2 ** levels
    return tuple(-(-s // step) * step for s in shape)


def dwt2_forward(r: np.ndarray, levels: int = DEFAULT_LEVELS) -> WaveletPyramid:
    r = np.asarray(r, dtype=np.float64)
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if r.ndim != 2 or r.size == 0:
        raise ValueError("dwt2_forward needs a non-empty 2-D raster")
    if min(r.shape) < 2 ** levels:
        raise TooManyLevels(f"{levels} levels need both sides >= {2 ** levels}, got {r.shape}")
    ph, pw = padded_shape(r.shape, levels)
    a = np.pad(r, ((0, ph - r.shape[0]), (0, pw - r.shape[1])), mode="symmetric")
    details = []
    for _ in range(levels):
        lo_x, hi_x = analyze_axis(a, axis=1)
        a, horizontal = analyze_axis(lo_x, axis=0)
        vertical, diagonal = analyze_axis(hi_x, axis=0)
        details.append(DetailBands(horizontal, vertical, diagonal))
    return WaveletPyramid(a, tuple(details), r.shape)


def dwt2_inverse(p: WaveletPyramid) -> np.ndarray:
    p.validate()
    a = p.approx
    for d in reversed(p.details):
        lo_x = synthesize_axis(a, d.horizontal, axis=0)
        hi_x = synthesize_axis(d.vertical, d.diagonal, axis=0)
        a = synthesize_axis(lo_x, hi_x, axis=1)
    oh, ow = p.original_dims
    return a[:oh, :ow]


def enhance_details(p: WaveletPyramid, g: EnhanceGains) -> WaveletPyramid:
    """Scale level-``j`` detail bands by ``g.detail[j-1]`` and the approximation by ``approx_gain``."""
    if len(g.detail) != p.levels:
        raise GainLengthMismatch(f"{len(g.detail)} gains for a {p.levels}-level pyramid")
    return replace(p, approx=p.approx * g.approx_gain,
                   details=tuple(d.scaled(gain) for d, gain in zip(p.details, g.detail)))


def wavelet_enhance(r: np.ndarray, within: np.ndarray | None = None,
                    g: EnhanceGains | None = None) -> np.ndarray:
    """Amplify detail bands, invert, clamp to [0, 1] and restore pixels outside ``within``.

    Outside pixels enter the transform as their nearest inside value, and the
    image is mirror-doubled so the periodic wrap joins matching rows and
    columns; both keep edges from ringing.
    """
    g = g or EnhanceGains()
    r = np.asarray(r, dtype=np.float64)
    if within is None:
        within = np.ones(r.shape, dtype=bool)
    check_same_shape(r, within)
    h, w = r.shape
    mirrored = np.pad(fill_outside(r, within), ((0, h), (0, w)), mode="symmetric")
    out = dwt2_inverse(enhance_details(dwt2_forward(mirrored, len(g.detail)), g))[:h, :w]
    return np.where(within, np.clip(out, 0.0, 1.0), r)
