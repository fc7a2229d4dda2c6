"""Deterministic background textures keyed by background id."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from augsched.envs.levels import safe_color

BACKGROUND_SALT = 0xB6
KINDS = ("solid", "stripes", "checker", "noise")


def background_kind(background_id: int) -> str:
    return KINDS[background_id % len(KINDS)]


@lru_cache(maxsize=256)
def background_texture(background_id: int, image_size: int) -> np.ndarray:
    """
    Texture for one background id

    Args:
        background_id (int): id; the texture family is ``id % 4``, colours come from the id's rng
        image_size (int): H = W in pixels

    Returns:
        np.ndarray: read-only (H, W, 3) float64 texture, colours quantized to 1/255 and
        never equal to a reserved entity colour
    """
    rng = np.random.default_rng([BACKGROUND_SALT, background_id])
    kind = background_kind(background_id)
    a, b = np.asarray(safe_color(rng)), np.asarray(safe_color(rng))
    rows, cols = np.mgrid[0:image_size, 0:image_size]
    if kind == "solid":
        mask = np.zeros((image_size, image_size), dtype=bool)
    elif kind == "stripes":
        width = int(rng.integers(2, 9))
        axis = rows if rng.random() < 0.5 else cols
        mask = (axis // width) % 2 == 1
    elif kind == "checker":
        size = int(rng.integers(2, 9))
        mask = ((rows // size) + (cols // size)) % 2 == 1
    else:
        block = 2
        cells = rng.random((image_size // block + 1, image_size // block + 1)) < 0.5
        mask = cells[rows // block, cols // block]
    texture = np.where(mask[..., None], b, a).astype(np.float64)
    texture.setflags(write=False)
    return texture
