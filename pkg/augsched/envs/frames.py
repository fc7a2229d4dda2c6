"""PPM (P6) frame dumps for eyeballing what the agent sees."""
from __future__ import annotations

from pathlib import Path
from typing import Iterable, List, Optional, Union

import numpy as np
import structlog

from augsched.augment.transforms import AugmentationSpec, apply
from augsched.envs.gridworld import EnvConfig, EnvMode, make_env
from augsched.utils.images import encode_obs

logger = structlog.get_logger("augsched")


def write_ppm(path: Union[str, Path], image: np.ndarray) -> Path:
    """Write an (H, W, 3) image in [0, 1] as binary 8-bit PPM"""
    path = Path(path)
    pixels = encode_obs(np.clip(image, 0.0, 1.0))
    height, width = pixels.shape[:2]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(f"P6\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes())
    return path


def read_ppm(path: Union[str, Path]) -> np.ndarray:
    """Read a P6 file written by write_ppm back to float64 in [0, 1]"""
    data = Path(path).read_bytes()
    magic, size, maxval, payload = data.split(b"\n", 3)
    if magic != b"P6" or maxval != b"255":
        raise ValueError(f"{path} is not an 8-bit P6 image")
    width, height = (int(v) for v in size.split())
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3).astype(np.float64) / 255.0


def dump_frames(
    config: EnvConfig,
    out_dir: Union[str, Path],
    count: int = 4,
    seed: int = 0,
    augmentations: Optional[Iterable[AugmentationSpec]] = None,
) -> List[Path]:
    """
    Render ``count`` reset frames per mode, plus one augmented copy per augmentation

    Files are named ``<mode>_<i>.ppm`` and ``<mode>_<i>_<kind>.ppm``.
    """
    out_dir = Path(out_dir)
    augmentations = list(augmentations or [])
    written = []
    for mode in EnvMode:
        if mode == EnvMode.TEST_BG and config.num_test_backgrounds < 1:
            continue
        env = make_env(config, mode, seed)
        rng = np.random.default_rng(seed)
        for i in range(count):
            frame = env.reset()
            written.append(write_ppm(out_dir / f"{mode.value}_{i}.ppm", frame))
            for spec in augmentations:
                written.append(write_ppm(out_dir / f"{mode.value}_{i}_{spec.kind}.ppm", apply(spec, frame, rng)))
    logger.info("Frames dumped", out_dir=str(out_dir), count=len(written))
    return written
