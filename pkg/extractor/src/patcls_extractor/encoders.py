"""Frozen image encoders and their inference preprocessing.

Five encoders are supported: the CLIP ViT-B/32 image tower (512-d projected
embedding) and four CNN backbones whose classification head is replaced by
identity, exposing the global-average-pooled penultimate features. Weights
load pretrained by default; ``pretrained=False`` builds a seeded random
initialization for offline use (the architecture, preprocessing, and frozen
/deterministic behavior are identical).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from PIL import Image
from torch import nn
from torchvision import models
from torchvision import transforms as T

CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_STD = (0.26862954, 0.26130258, 0.27577711)
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

CLIP_WEIGHTS_ID = "openai/clip-vit-base-patch32"


@dataclass(frozen=True)
class EncoderSpec:
    name: str
    output_dim: int


ENCODER_SPECS = {
    "clip_vit_b32": EncoderSpec("clip_vit_b32", 512),
    "resnet50": EncoderSpec("resnet50", 2048),
    "resnext101_64x4d": EncoderSpec("resnext101_64x4d", 2048),
    "efficientnetv2_m": EncoderSpec("efficientnetv2_m", 1280),
    "regnety_16gf": EncoderSpec("regnety_16gf", 3024),
}

# torchvision constructor, weights enum, and classifier attribute to strip.
_TORCHVISION_BACKBONES = {
    "resnet50": (models.resnet50, models.ResNet50_Weights, "fc"),
    "resnext101_64x4d": (
        models.resnext101_64x4d, models.ResNeXt101_64X4D_Weights, "fc"),
    "efficientnetv2_m": (
        models.efficientnet_v2_m, models.EfficientNet_V2_M_Weights, "classifier"),
    "regnety_16gf": (models.regnet_y_16gf, models.RegNet_Y_16GF_Weights, "fc"),
}

_CLIP_TRANSFORM_NAME = "clip_resize224_bicubic_crop224_clipnorm"
_IMAGENET_TRANSFORM_NAME = "imagenet_resize256_crop224_imagenetnorm"


def _clip_transform():
    return T.Compose([
        T.Resize(224, interpolation=T.InterpolationMode.BICUBIC),
        T.CenterCrop(224),
        T.ToTensor(),
        T.Normalize(CLIP_MEAN, CLIP_STD),
    ])


def _imagenet_transform():
    return T.Compose([
        T.Resize(256),
        T.CenterCrop(224),
        T.ToTensor(),
        T.Normalize(IMAGENET_MEAN, IMAGENET_STD),
    ])


class _ClipImageTower(nn.Module):
    """Wraps the CLIP vision model so forward() returns projected embeddings."""

    def __init__(self, pretrained: bool):
        super().__init__()
        from transformers import CLIPVisionConfig, CLIPVisionModelWithProjection

        if pretrained:
            self.clip = CLIPVisionModelWithProjection.from_pretrained(
                CLIP_WEIGHTS_ID)
        else:
            self.clip = CLIPVisionModelWithProjection(CLIPVisionConfig())

    def forward(self, pixels: torch.Tensor) -> torch.Tensor:
        return self.clip(pixel_values=pixels).image_embeds


class FrozenEncoder:
    """An inference-only encoder; weights never receive gradients."""

    def __init__(self, spec: EncoderSpec, module: nn.Module, transform,
                 transform_name: str):
        self.spec = spec
        self.module = module.eval()
        for param in self.module.parameters():
            param.requires_grad_(False)
        self.transform = transform
        self.transform_name = transform_name

    def encode(self, images: Sequence[Image.Image]) -> np.ndarray:
        """Pooled feature per image, shape (len(images), output_dim)."""
        batch = torch.stack([self.transform(img.convert("RGB"))
                             for img in images])
        with torch.no_grad():
            features = self.module(batch)
        out = features.cpu().numpy().astype(np.float32)
        if out.shape != (len(images), self.spec.output_dim):
            raise RuntimeError(
                f"{self.spec.name} produced shape {out.shape}, expected "
                f"(n, {self.spec.output_dim})"
            )
        return out

    def weight_checksum(self) -> str:
        digest = hashlib.sha256()
        state = self.module.state_dict()
        for key in sorted(state):
            digest.update(key.encode())
            digest.update(state[key].cpu().contiguous().numpy().tobytes())
        return digest.hexdigest()


def encoder_names() -> tuple[str, ...]:
    return tuple(ENCODER_SPECS)


def load_encoder(name: str, pretrained: bool = True,
                 seed: int = 0) -> FrozenEncoder:
    """Build a frozen encoder; deterministic for a given (name, seed)."""
    if name not in ENCODER_SPECS:
        raise ValueError(
            f"unknown encoder {name!r} (expected one of {', '.join(ENCODER_SPECS)})"
        )
    spec = ENCODER_SPECS[name]
    torch.manual_seed(seed)
    if name == "clip_vit_b32":
        module = _ClipImageTower(pretrained)
        return FrozenEncoder(spec, module, _clip_transform(),
                             _CLIP_TRANSFORM_NAME)
    ctor, weights_enum, head_attr = _TORCHVISION_BACKBONES[name]
    if pretrained:
        weights = weights_enum.DEFAULT
        module = ctor(weights=weights)
        transform = weights.transforms()
        transform_name = f"torchvision:{weights_enum.DEFAULT.name}"
    else:
        module = ctor(weights=None)
        transform = _imagenet_transform()
        transform_name = _IMAGENET_TRANSFORM_NAME
    setattr(module, head_attr, nn.Identity())
    return FrozenEncoder(spec, module, transform, transform_name)
