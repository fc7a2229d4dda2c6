"""uint8 storage of rendered frames.

Rendered colours are multiples of 1/255, so encode/decode is lossless for
environment frames. Augmented frames are never encoded.
"""
import numpy as np


def encode_obs(images: np.ndarray) -> np.ndarray:
    return np.rint(np.asarray(images, dtype=np.float64) * 255.0).astype(np.uint8)


def decode_obs(images: np.ndarray) -> np.ndarray:
    if images.dtype == np.uint8:
        return images.astype(np.float64) / 255.0
    return np.asarray(images, dtype=np.float64)
