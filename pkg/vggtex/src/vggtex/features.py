"""VGG-19 convolutional feature stacks.

Features are the post-activation (rectified) outputs of the 16 conv layers,
in network order: conv1_1 ... conv5_4. Inputs are RGB images normalized with
the ImageNet statistics the network was trained with. Extraction is
deterministic for a fixed image and fixed weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image
from torch import nn
from torchvision.models import vgg19

N_CONV_LAYERS = 16
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class MissingWeights(RuntimeError):
    """Pretrained weights requested but not available locally."""


@dataclass
class ExtractionSpec:
    """What to extract and how.

    weights: 'pretrained' (torchvision cache; raises MissingWeights when the
    cache is cold and there is no network), 'random' (architecture with
    seeded random filters, for offline/testing use), or a path to a saved
    state dict. layers are 1-indexed conv positions, in network order.
    """

    image: str = ""
    layers: tuple[int, ...] = tuple(range(1, N_CONV_LAYERS + 1))
    weights: str = "pretrained"
    seed: int = 0
    resize: tuple[int, int] | None = None

    def __post_init__(self):
        bad = [h for h in self.layers if not 1 <= h <= N_CONV_LAYERS]
        if bad:
            raise ValueError(
                f"VGG-19 has conv layers 1..{N_CONV_LAYERS}, requested {bad}"
            )


def _build_backbone(weights: str, seed: int) -> nn.Sequential:
    if weights == "random":
        torch.manual_seed(seed)
        model = vgg19(weights=None)
    elif weights == "pretrained":
        try:
            from torchvision.models import VGG19_Weights
            model = vgg19(weights=VGG19_Weights.IMAGENET1K_V1)
        except Exception as exc:  # cold cache and no way to download
            raise MissingWeights(
                "pretrained VGG-19 weights are not available locally; pass "
                "weights='random' or a state-dict path"
            ) from exc
    else:
        model = vgg19(weights=None)
        try:
            state = torch.load(weights, map_location="cpu",
                               weights_only=True)
        except Exception as exc:
            raise MissingWeights(f"cannot load weights from {weights}") from exc
        model.load_state_dict(state)
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model.features


class FeatureExtractor(nn.Module):
    """Runs the VGG-19 trunk and returns the requested rectified conv maps."""

    def __init__(self, spec: ExtractionSpec, dtype=torch.float32):
        super().__init__()
        self.spec = spec
        self.trunk = _build_backbone(spec.weights, spec.seed).to(dtype)
        self.dtype = dtype
        mean = torch.tensor(IMAGENET_MEAN, dtype=dtype).view(1, 3, 1, 1)
        std = torch.tensor(IMAGENET_STD, dtype=dtype).view(1, 3, 1, 1)
        self.register_buffer("mean", mean)
        self.register_buffer("std", std)

    def forward(self, image: torch.Tensor) -> list[torch.Tensor]:
        """image: (1, 3, H, W) in [0, 1]; returns one map per spec layer."""
        wanted = set(self.spec.layers)
        deepest = max(wanted)
        x = (image - self.mean) / self.std
        outputs = {}
        conv_index = 0
        for module in self.trunk:
            x = module(x)
            if isinstance(module, nn.ReLU):
                conv_index += 1
                if conv_index in wanted:
                    outputs[conv_index] = x
                if conv_index == deepest:
                    break
        return [outputs[h] for h in self.spec.layers]


def load_image(path, resize=None) -> np.ndarray:
    """RGB image as (H, W, 3) float32 in [0, 1]."""
    with Image.open(path) as img:
        img = img.convert("RGB")
        if resize is not None:
            img = img.resize((resize[1], resize[0]), Image.BILINEAR)
        return np.asarray(img, dtype=np.float32) / 255.0


def save_image(array: np.ndarray, path) -> None:
    arr = np.clip(np.asarray(array), 0.0, 1.0)
    Image.fromarray((arr * 255.0 + 0.5).astype(np.uint8)).save(path)


def image_to_tensor(array: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    return torch.from_numpy(
        np.ascontiguousarray(array.transpose(2, 0, 1))[None]
    ).to(dtype)


def extract_feature_arrays(image: np.ndarray,
                           spec: ExtractionSpec) -> list[np.ndarray]:
    """Feature maps as (H, W, C) float32 arrays, one per requested layer."""
    extractor = FeatureExtractor(spec)
    with torch.no_grad():
        maps = extractor(image_to_tensor(image))
    return [
        m[0].permute(1, 2, 0).contiguous().numpy().astype(np.float32)
        for m in maps
    ]


def extract(spec: ExtractionSpec, output_path) -> list[tuple[int, int, int]]:
    """Extract spec.image to an FMAP file; returns the layer shapes."""
    from .fmapio import write_fmap

    image = load_image(spec.image, spec.resize)
    layers = extract_feature_arrays(image, spec)
    write_fmap(layers, output_path)
    return [tuple(layer.shape) for layer in layers]
