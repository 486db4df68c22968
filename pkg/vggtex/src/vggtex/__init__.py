"""VGG-19 feature-stack extraction and segment-guided texture synthesis."""

from .bundle import SegmentStats, SynthesisBundle, load_bundle
from .colors import color_match, sliced_distance
from .features import (
    ExtractionSpec,
    FeatureExtractor,
    MissingWeights,
    extract,
    extract_feature_arrays,
    load_image,
    save_image,
)
from .fmapio import read_fmap, write_fmap
from .synthesis import SynthesisResult, SynthesisSpec, segment_moments, synthesize

__version__ = "0.1.0"

__all__ = [
    "ExtractionSpec",
    "FeatureExtractor",
    "MissingWeights",
    "SegmentStats",
    "SynthesisBundle",
    "SynthesisResult",
    "SynthesisSpec",
    "color_match",
    "extract",
    "extract_feature_arrays",
    "load_bundle",
    "load_image",
    "read_fmap",
    "save_image",
    "segment_moments",
    "sliced_distance",
    "synthesize",
    "write_fmap",
]
