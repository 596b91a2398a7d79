"""Pipeline configuration and its flat ``key = value`` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .prep import MaskGenParams, UnsharpParams
from .segment import ThresholdFieldParams, WatershedParams
from .wavelet import EnhanceGains

METHODS = ("adaptive", "watershed", "both")


@dataclass(frozen=True)
class PipelineConfig:
    method: str = "both"
    median_w: int = 4
    median_h: int = 4
    unsharp_window_m: int = 11
    unsharp_window_n: int = 11
    unsharp_k: float = 0.8
    gains: tuple[float, ...] = (1.5, 1.5, 1.5, 1.0, 1.0)
    approx_gain: float = 1.0
    tile: int = 256
    stride: int = 128
    em_max_iter: int = 200
    em_tol: float = 1e-6
    sigma_floor: float = 1e-4
    min_tile_pixels: int = 1024
    threshold_bins: int = 256
    otsu_bins: int = 256
    close_radius: int = 5
    min_area_fraction: float = 0.01
    min_marker_area: int = 2
    se_radius: int = 1
    background_radius: int = 10
    cluster_radius_mm: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.median_w < 1 or self.median_h < 1:
            raise ConfigError("median window sides must be >= 1")
        if not self.cluster_radius_mm > 0:
            raise ConfigError("cluster_radius_mm must be positive")
        try:
            self.unsharp, self.enhance_gains, self.threshold, self.maskgen, self.watershed
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def methods(self) -> tuple[str, ...]:
        return ("adaptive", "watershed") if self.method == "both" else (self.method,)

    @property
    def unsharp(self) -> UnsharpParams:
        return UnsharpParams(self.unsharp_window_m, self.unsharp_window_n, self.unsharp_k)

    @property
    def enhance_gains(self) -> EnhanceGains:
        return EnhanceGains(tuple(self.gains), self.approx_gain)

    @property
    def threshold(self) -> ThresholdFieldParams:
        return ThresholdFieldParams(self.tile, self.stride, self.em_max_iter, self.em_tol,
                                    self.sigma_floor, self.min_tile_pixels, self.threshold_bins)

    @property
    def maskgen(self) -> MaskGenParams:
        return MaskGenParams(self.otsu_bins, self.close_radius, self.min_area_fraction)

    @property
    def watershed(self) -> WatershedParams:
        return WatershedParams(self.se_radius, self.background_radius, self.min_marker_area,
                               self.otsu_bins)

    def echo(self) -> dict:
        out = dataclasses.asdict(self)
        out["gains"] = list(self.gains)
        return out


def _coerce(name: str, raw: str, default):
    try:
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(v) for v in raw.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return raw


def parse_config(text: str, **overrides) -> PipelineConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    defaults = PipelineConfig()
    known = {f.name: getattr(defaults, f.name) for f in dataclasses.fields(PipelineConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw.strip(), known[key])
    values.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig(**values)


def load_config(path: str | Path | None, **overrides) -> PipelineConfig:
    if path is None:
        return parse_config("", **overrides)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, **overrides)
