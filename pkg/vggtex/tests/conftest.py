import numpy as np
import pytest
import torch

from vggtex.bundle import SegmentStats, SynthesisBundle
from vggtex.features import ExtractionSpec, FeatureExtractor, image_to_tensor
from vggtex.synthesis import segment_moments


@pytest.fixture
def rng():
    return np.random.default_rng(77)


def two_tone_image(rng, side=16):
    """Left/right halves with different base colors plus texture."""
    img = rng.random((side, side, 3)).astype(np.float32) * 0.3
    img[:, side // 2 :, 0] += 0.6
    img[:, : side // 2, 2] += 0.6
    return np.clip(img, 0.0, 1.0)


def build_bundle_from_image(image, n_layers=2, weights_seed=0,
                            dtype=torch.float64):
    """In-memory bundle whose stats are the image's own masked moments.

    Masks split every layer's lattice into left/right halves, mirroring what
    a two-component segmentation of a two-tone image produces.
    """
    spec = ExtractionSpec(layers=tuple(range(1, n_layers + 1)),
                          weights="random", seed=weights_seed)
    extractor = FeatureExtractor(spec, dtype=dtype)
    with torch.no_grad():
        maps = extractor(image_to_tensor(image, dtype))
    segments = {}
    grids = []
    for h, feature_map in enumerate(maps, start=1):
        height, width = feature_map.shape[2], feature_map.shape[3]
        grids.append((height, width))
        for k in range(2):
            mask = np.zeros((height, width), dtype=bool)
            if k == 0:
                mask[:, : width // 2] = True
            else:
                mask[:, width // 2 :] = True
            mean, cov = segment_moments(feature_map, mask)
            segments[(h, k)] = SegmentStats(
                layer=h, component=k, pixels=int(mask.sum()),
                mean=mean.numpy(), covariance=cov.numpy(), mask=mask,
            )
    return SynthesisBundle(
        directory=None, n_components=2, n_layers=n_layers,
        source_fmap="", grids=grids, segments=segments,
    )
