"""Multi-scale CNN activation exporter for the fvagg pipeline."""

from .extract import (
    DEFAULT_LAYER,
    DEFAULT_SCALES,
    ConfigError,
    ExtractionResult,
    ExtractorConfig,
    ExtractorError,
    extract,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_LAYER",
    "DEFAULT_SCALES",
    "ConfigError",
    "ExtractionResult",
    "ExtractorConfig",
    "ExtractorError",
    "extract",
]
