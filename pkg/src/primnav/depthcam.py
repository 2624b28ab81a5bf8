"""
Front-facing pinhole depth camera rendered by raycasting against a world.

Pixel values are z-depth (distance along the optical axis) divided by the
maximum range and clipped to [0, 1]; rays that miss or land beyond range read 1.0.
Row 0 is the top of the image and column 0 its left edge.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from pydantic import model_validator

from primnav.parameters import Meters, Parameters, Radians
from primnav.primitives import yaw_rotation
from primnav.world import WorldSpec, ray_distances

IMAGE_SIZE = 32
PGM_MAXVAL = 255


class CameraIntrinsics(Parameters):
    width: int = IMAGE_SIZE
    height: int = IMAGE_SIZE
    horizontal_fov: Radians = 1.571
    vertical_fov: Radians = 1.047
    max_range: Meters = 20.0

    @model_validator(mode="after")
    def _check(self):
        if (self.width, self.height) != (IMAGE_SIZE, IMAGE_SIZE):
            raise ValueError(f"depth images are fixed at {IMAGE_SIZE}x{IMAGE_SIZE}")
        for fov in (self.horizontal_fov, self.vertical_fov):
            if not 0.0 < fov < np.pi:
                raise ValueError(f"field of view must lie in (0, pi), got {fov}")
        if self.max_range <= 0:
            raise ValueError(f"max_range must be positive, got {self.max_range}")
        return self


@lru_cache(maxsize=8)
def _body_rays(width: int, height: int, horizontal_fov: float, vertical_fov: float) -> tuple[np.ndarray, np.ndarray]:
    """Unit body-frame ray per pixel (H*W, 3) and its forward component (H*W,)."""
    cols = (np.arange(width) + 0.5) / width
    rows = (np.arange(height) + 0.5) / height
    left = np.tan(horizontal_fov / 2) * (1.0 - 2.0 * cols)
    up = np.tan(vertical_fov / 2) * (1.0 - 2.0 * rows)
    up_grid, left_grid = np.meshgrid(up, left, indexing="ij")
    rays = np.stack([np.ones_like(left_grid), left_grid, up_grid], axis=-1).reshape(-1, 3)
    norms = np.linalg.norm(rays, axis=1)
    unit = rays / norms[:, np.newaxis]
    unit.setflags(write=False)
    forward = unit[:, 0].copy()
    forward.setflags(write=False)
    return unit, forward


def pixel_rays(intrinsics: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    return _body_rays(intrinsics.width, intrinsics.height, intrinsics.horizontal_fov, intrinsics.vertical_fov)


def render(
    world: WorldSpec,
    camera_position,
    yaw: float,
    intrinsics: CameraIntrinsics | None = None,
) -> np.ndarray:
    """Depth image (32, 32) seen from `camera_position` looking along the yaw-rotated body +x."""
    intrinsics = intrinsics or CameraIntrinsics()
    body, forward = pixel_rays(intrinsics)
    world_rays = body @ yaw_rotation(yaw).T
    distances = ray_distances(world, camera_position, world_rays)
    axial = np.minimum(distances * forward, intrinsics.max_range)
    image = axial / intrinsics.max_range
    return image.reshape(intrinsics.height, intrinsics.width)


@dataclass(frozen=True)
class GaussianNoise:
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"noise sigma must be non-negative, got {self.sigma}")


def add_noise(image: np.ndarray, model: GaussianNoise | None, rng: np.random.Generator) -> np.ndarray:
    """Additive per-pixel noise, re-clipped to [0, 1]. No model or sigma 0 returns the input."""
    if model is None or model.sigma == 0:
        return image
    noisy = image + rng.normal(0.0, model.sigma, size=image.shape)
    return np.clip(noisy, 0.0, 1.0)


def to_pgm(image: np.ndarray) -> str:
    """Plain-text PGM (P2) with maxval 255, values rounded half up."""
    # 1e-9 absorbs float noise on exact halves such as 0.5 * 255.
    values = np.floor(np.clip(image, 0.0, 1.0) * PGM_MAXVAL + 0.5 + 1e-9).astype(int)
    height, width = values.shape
    rows = "\n".join(" ".join(str(v) for v in row) for row in values)
    return f"P2\n{width} {height}\n{PGM_MAXVAL}\n{rows}\n"


def write_pgm(path: Path, image: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_pgm(image))
    return path
