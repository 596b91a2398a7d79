"""Microcalcification-cluster segmentation for digitized mammograms."""

from .config import PipelineConfig, load_config
from .phantom import generate_phantom
from .pipeline import run_pipeline
from .raster import ImageMeta, Raster, load_image

__all__ = ["ImageMeta", "PipelineConfig", "Raster", "generate_phantom", "load_config",
           "load_image", "run_pipeline"]
__version__ = "0.1.0"
