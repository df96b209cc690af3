"""Stochastic training-time augmentation.

Augmentation is split into two halves: ``sample_augment_params`` draws the
random transform amounts, and ``apply_augment`` deterministically applies
them. That keeps the randomness in one seeded place and makes every applied
transform replayable.

Geometry: rotation, shear, zoom, and shift compose into a single affine
warp about the image center (in that order), resampled bilinearly with
nearest-edge fill for coordinates falling outside the source; flips are
applied last as exact array reversals. Output size always equals input
size. Augmentation is for training batches only; the trainer never routes
validation or test data through it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .imaging import Image, bilinear_sample, quantize


@dataclass(frozen=True)
class AugmentConfig:
    """Ranges the sampler draws from.

    Defaults: rotation within +/-15 degrees, shifts within 10% of each
    dimension, shear factor within +/-0.2, zoom between 80% and 120%, and
    fair-coin horizontal/vertical flips. New pixels use nearest-edge fill.
    """

    rotation_deg: float = 15.0
    height_shift_frac: float = 0.1
    width_shift_frac: float = 0.1
    shear: float = 0.2
    zoom_frac: float = 0.2
    hflip: bool = True
    vflip: bool = True

    def __post_init__(self) -> None:
        if self.rotation_deg < 0:
            raise ParameterError("rotation range must be >= 0")
        for name in ("height_shift_frac", "width_shift_frac", "zoom_frac"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ParameterError(f"{name} must lie in [0, 1), got {v}")
        if self.shear < 0:
            raise ParameterError("shear range must be >= 0")

    @classmethod
    def disabled(cls) -> "AugmentConfig":
        """Config whose samples are always the identity transform."""
        return cls(
            rotation_deg=0.0,
            height_shift_frac=0.0,
            width_shift_frac=0.0,
            shear=0.0,
            zoom_frac=0.0,
            hflip=False,
            vflip=False,
        )


@dataclass(frozen=True)
class AugmentParams:
    """One concrete sampled transform: angle in degrees, pixel shifts, shear
    factor, isotropic zoom factor, and flip decisions."""

    angle_deg: float = 0.0
    dx: float = 0.0
    dy: float = 0.0
    shear: float = 0.0
    zoom: float = 1.0
    hflip: bool = False
    vflip: bool = False

    @property
    def is_identity(self) -> bool:
        return (
            self.angle_deg == 0.0
            and self.dx == 0.0
            and self.dy == 0.0
            and self.shear == 0.0
            and self.zoom == 1.0
            and not self.hflip
            and not self.vflip
        )


def sample_augment_params(
    rng: np.random.Generator, cfg: AugmentConfig, height: int, width: int
) -> AugmentParams:
    """Draw transform amounts uniformly from the configured ranges.

    The draw order (angle, dy, dx, shear, zoom, flips) is fixed so a seeded
    generator always produces the same params.
    """
    angle = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg) if cfg.rotation_deg else 0.0
    dy = rng.uniform(-cfg.height_shift_frac, cfg.height_shift_frac) * height if cfg.height_shift_frac else 0.0
    dx = rng.uniform(-cfg.width_shift_frac, cfg.width_shift_frac) * width if cfg.width_shift_frac else 0.0
    shear = rng.uniform(-cfg.shear, cfg.shear) if cfg.shear else 0.0
    zoom = rng.uniform(1.0 - cfg.zoom_frac, 1.0 + cfg.zoom_frac) if cfg.zoom_frac else 1.0
    hflip = bool(rng.integers(0, 2)) if cfg.hflip else False
    vflip = bool(rng.integers(0, 2)) if cfg.vflip else False
    return AugmentParams(angle, dx, dy, shear, zoom, hflip, vflip)


def _forward_matrix(p: AugmentParams, height: int, width: int) -> np.ndarray:
    """3x3 matrix mapping input (x, y, 1) to output coordinates.

    Rotation, shear, and zoom act about the image center; the shift is
    applied afterwards. Composition order is fixed for determinism.
    """
    cx = (width - 1) / 2.0
    cy = (height - 1) / 2.0
    theta = math.radians(p.angle_deg)

    def mat(a, b, tx, c, d, ty):
        return np.array([[a, b, tx], [c, d, ty], [0.0, 0.0, 1.0]])

    to_center = mat(1, 0, -cx, 0, 1, -cy)
    rotate = mat(math.cos(theta), -math.sin(theta), 0, math.sin(theta), math.cos(theta), 0)
    shear = mat(1, p.shear, 0, 0, 1, 0)
    zoom = mat(p.zoom, 0, 0, 0, p.zoom, 0)
    from_center = mat(1, 0, cx, 0, 1, cy)
    shift = mat(1, 0, p.dx, 0, 1, p.dy)
    return shift @ from_center @ zoom @ shear @ rotate @ to_center


def apply_augment(img: Image, p: AugmentParams) -> Image:
    """Apply sampled params to one image; output dims equal input dims."""
    if p.is_identity:
        return Image(img.pixels.copy())

    h, w = img.height, img.width
    out = img.pixels
    needs_warp = (
        p.angle_deg != 0.0 or p.dx != 0.0 or p.dy != 0.0 or p.shear != 0.0 or p.zoom != 1.0
    )
    if needs_warp:
        inv = np.linalg.inv(_forward_matrix(p, h, w))
        ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
        src_x = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
        src_y = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
        out = quantize(bilinear_sample(out.astype(np.float64), src_y, src_x))
    if p.hflip:
        out = out[:, ::-1]
    if p.vflip:
        out = out[::-1, :]
    return Image(np.ascontiguousarray(out))
