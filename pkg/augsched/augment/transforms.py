"""
Image augmentations φ: (H, W, 3) image in [0, 1] → image of the same shape.

Every transform draws its randomness from the Generator it is handed, so
(spec, image, rng state) fully determines the output.
"""
from __future__ import annotations

from typing import Callable, Dict, Literal, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from augsched.utils.errors import AugmentationError
from augsched.utils.images import decode_obs

AugmentationKind = Literal[
    "identity", "random_crop", "grayscale", "cutout_color", "color_jitter", "random_conv", "random_color", "black"
]

KIND_PARAMS: Dict[str, Tuple[str, ...]] = {
    "identity": (),
    "random_crop": ("crop_min",),
    "grayscale": (),
    "cutout_color": ("cutout_max",),
    "color_jitter": ("brightness", "contrast", "saturation"),
    "random_conv": ("conv_kernel",),
    "random_color": ("brightness", "contrast", "saturation", "conv_kernel"),
    "black": (),
}


class AugmentationSpec(BaseModel):
    """One augmentation kind with its parameters"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: AugmentationKind = "identity"
    crop_min: float = Field(0.6, gt=0.0, le=1.0)
    cutout_max: float = Field(0.5, gt=0.0, le=1.0)
    brightness: float = Field(0.3, ge=0.0, lt=1.0)
    contrast: float = Field(0.3, ge=0.0, lt=1.0)
    saturation: float = Field(0.3, ge=0.0, lt=1.0)
    conv_kernel: int = Field(3, ge=1, le=7)

    @field_validator("conv_kernel")
    @classmethod
    def _odd_kernel(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("conv_kernel must be odd")
        return value

    @model_validator(mode="after")
    def _params_belong_to_kind(self) -> "AugmentationSpec":
        # parameters of other kinds may only appear at their default values
        foreign = {
            name for name in set(self.model_fields_set) - {"kind"} - set(KIND_PARAMS[self.kind])
            if getattr(self, name) != self.model_fields[name].default
        }
        if foreign:
            raise ValueError(f"{self.kind} does not take parameters {sorted(foreign)}")
        return self

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    @property
    def label(self) -> str:
        return self.kind


def make_augmentation(value: Union[str, dict, AugmentationSpec]) -> AugmentationSpec:
    """Build a spec from a kind name, a mapping or a spec, raising AugmentationError on bad input"""
    if isinstance(value, AugmentationSpec):
        return value
    try:
        if isinstance(value, str):
            return AugmentationSpec(kind=value)
        return AugmentationSpec.model_validate(value)
    except ValidationError as e:
        raise AugmentationError(f"invalid augmentation {value!r}: {e.errors()[0]['msg']}")


def sample_crop_box(rng: np.random.Generator, height: int, width: int, crop_min: float) -> Tuple[int, int, int, int]:
    """(top, left, h, w) with side fractions uniform in [crop_min, 1] and uniform position"""
    h = int(rng.integers(int(np.ceil(crop_min * height)), height + 1))
    w = int(rng.integers(int(np.ceil(crop_min * width)), width + 1))
    top = int(rng.integers(0, height - h + 1))
    left = int(rng.integers(0, width - w + 1))
    return top, left, h, w


def _identity(spec, image, rng):
    return image.copy()


def _black(spec, image, rng):
    return np.zeros_like(image)


def _random_crop(spec, image, rng):
    top, left, h, w = sample_crop_box(rng, image.shape[0], image.shape[1], spec.crop_min)
    out = np.zeros_like(image)
    out[top:top + h, left:left + w] = image[top:top + h, left:left + w]
    return out


def _grayscale(spec, image, rng):
    # already-gray pixels are kept bit-exact so the transform is idempotent
    gray = image.mean(axis=-1, keepdims=True)
    uniform = np.all(image == image[..., :1], axis=-1, keepdims=True)
    return np.broadcast_to(np.where(uniform, image[..., :1], gray), image.shape).copy()


def _cutout_color(spec, image, rng):
    height, width = image.shape[:2]
    h = int(rng.integers(1, max(1, int(spec.cutout_max * height)) + 1))
    w = int(rng.integers(1, max(1, int(spec.cutout_max * width)) + 1))
    top = int(rng.integers(0, height - h + 1))
    left = int(rng.integers(0, width - w + 1))
    out = image.copy()
    out[top:top + h, left:left + w] = rng.random(3)
    return out


def _color_jitter(spec, image, rng):
    brightness = rng.uniform(1.0 - spec.brightness, 1.0 + spec.brightness)
    contrast = rng.uniform(1.0 - spec.contrast, 1.0 + spec.contrast)
    saturation = rng.uniform(1.0 - spec.saturation, 1.0 + spec.saturation)
    out = image * brightness
    mean = out.mean()
    out = (out - mean) * contrast + mean
    gray = out.mean(axis=-1, keepdims=True)
    out = (out - gray) * saturation + gray
    return np.clip(out, 0.0, 1.0)


def _random_conv(spec, image, rng):
    k = spec.conv_kernel
    kernel = rng.normal(0.0, 1.0 / np.sqrt(3 * k * k), size=(k, k, 3, 3))
    pad = k // 2
    padded = np.pad(image, ((pad, pad), (pad, pad), (0, 0)))
    windows = sliding_window_view(padded, (k, k), axis=(0, 1))  # (H, W, 3, k, k)
    out = np.einsum("hwcij,ijco->hwo", windows, kernel)
    lo, hi = out.min(), out.max()
    if hi - lo < 1e-12:
        return np.zeros_like(image)
    return (out - lo) / (hi - lo)


def _random_color(spec, image, rng):
    if rng.random() < 0.5:
        return _color_jitter(spec, image, rng)
    return _random_conv(spec, image, rng)


TRANSFORMS: Dict[str, Callable[[AugmentationSpec, np.ndarray, np.random.Generator], np.ndarray]] = {
    "identity": _identity,
    "random_crop": _random_crop,
    "grayscale": _grayscale,
    "cutout_color": _cutout_color,
    "color_jitter": _color_jitter,
    "random_conv": _random_conv,
    "random_color": _random_color,
    "black": _black,
}


def apply(spec: AugmentationSpec, image: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    Apply one augmentation to a single image

    Args:
        spec (AugmentationSpec): kind and parameters
        image (np.ndarray): (H, W, 3) in [0, 1], float or encoded uint8
        rng (np.random.Generator): randomness source, advanced in place

    Returns:
        np.ndarray: float64 image of the same shape, values in [0, 1]
    """
    image = decode_obs(np.asarray(image))
    if image.ndim != 3 or image.shape[-1] != 3:
        raise AugmentationError(f"expected an (H, W, 3) image, got shape {image.shape}")
    return TRANSFORMS[spec.kind](spec, image, rng)


def batch_apply(spec: AugmentationSpec, images: Union[np.ndarray, Sequence[np.ndarray]], rng: np.random.Generator) -> np.ndarray:
    """Apply ``spec`` to each image in order, each with its own draws from ``rng``"""
    images = np.asarray(images)
    if images.ndim != 4:
        raise AugmentationError(f"expected a batch of images, got shape {images.shape}")
    if spec.is_identity:
        return decode_obs(images).copy()
    return np.stack([apply(spec, image, rng) for image in images]) if len(images) else decode_obs(images).copy()
