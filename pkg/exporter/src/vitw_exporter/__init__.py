"""Checkpoint-to-VITW conversion and engine-ready image preprocessing."""

__version__ = "0.1.0"

from .export import ExportError, ExportManifest, export_checkpoint
from .preprocess import preprocess_image
from .vitw import SpecValues, write_vitw
