"""Image type and the preprocessing transforms applied before classification.

The chain used by the named pipeline variants:

* ROI selection keeps only pixels brighter than the image-mean intensity,
  zeroing the (dark) background around the printed part.
* Histogram equalization remaps intensities through the cumulative
  distribution so the retained region uses the full 8-bit range.
* The detail enhancer multiplies each intensity by ``1 + k*(f - 128)``,
  pushing values away from mid-gray to sharpen local contrast.

All intensity quantization rounds half-to-even and clamps to [0, 255].
Every operation is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ParameterError, ShapeError

GRAY = "GRAY"
RGB = "RGB"

# Intensity levels of an 8-bit image.
LEVELS = 256

# Rec. 601 luma weights, used both for RGB->gray and for scalar thresholds.
_LUMA = np.array([0.299, 0.587, 0.114])

DEFAULT_DETAIL_K = 0.005


@dataclass(frozen=True)
class Image:
    """8-bit image stored as a (height, width, channels) array.

    ``channels`` is 1 (grayscale) or 3 (RGB). The constructor normalizes
    2-D input to a single-channel 3-D array and rejects empty images.
    """

    pixels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.pixels)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ShapeError(f"image must be 2-D or 3-D, got shape {arr.shape}")
        if arr.shape[2] not in (1, 3):
            raise ShapeError(f"image must have 1 or 3 channels, got {arr.shape[2]}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(f"image must be non-empty, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if np.any(arr < 0) or np.any(arr > 255):
                raise ShapeError("intensities must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def colorspace(self) -> str:
        return GRAY if self.channels == 1 else RGB

    def luminance(self) -> np.ndarray:
        """Per-pixel luma as float64 (the channel itself for grayscale)."""
        px = self.pixels.astype(np.float64)
        if self.channels == 1:
            return px[:, :, 0]
        return px @ _LUMA

    def to_rgb(self) -> "Image":
        if self.channels == 3:
            return self
        return Image(np.repeat(self.pixels, 3, axis=2))

    def to_gray(self) -> "Image":
        if self.channels == 1:
            return self
        return Image(quantize(self.luminance())[:, :, None])

    def same_pixels(self, other: "Image") -> bool:
        return self.pixels.shape == other.pixels.shape and np.array_equal(
            self.pixels, other.pixels
        )


def quantize(values: np.ndarray) -> np.ndarray:
    """Round half-to-even and clamp to the 8-bit range."""
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def roi_select(img: Image) -> Image:
    """Zero every pixel whose luma is not strictly above the mean luma.

    For RGB input the threshold comes from the luminance image and all
    channels are zeroed at rejected positions. A constant image therefore
    maps to all zeros (no pixel is strictly above the mean).
    """
    lum = img.luminance()
    threshold = lum.mean()
    mask = lum > threshold
    out = np.where(mask[:, :, None], img.pixels, np.uint8(0))
    return Image(out)


class EqualizeResult(NamedTuple):
    image: Image
    degenerate: bool


def _equalize_lut(levels: np.ndarray) -> np.ndarray | None:
    """Equalization lookup table for an array of integer levels.

    Returns None when the image is constant (the denominator would be zero).
    """
    hist = np.bincount(levels.ravel(), minlength=LEVELS)
    cdf = np.cumsum(hist)
    total = levels.size
    cdf_min = int(cdf[np.nonzero(hist)[0][0]])
    if total == cdf_min:
        return None
    scale = (LEVELS - 1) / (total - cdf_min)
    return np.clip(np.rint((cdf - cdf_min) * scale), 0, LEVELS - 1)


def hist_equalize(img: Image) -> EqualizeResult:
    """Histogram-equalize intensities; monotone in the input levels.

    Each level maps to ``(CDF(f) - CDF_min) / (MN - CDF_min) * (L - 1)``.
    Grayscale images are equalized directly. RGB images are equalized on
    the luminance channel and each pixel's channels are rescaled by the
    luma ratio, preserving chroma. Constant images are returned unchanged
    with ``degenerate`` set instead of dividing by zero.
    """
    if img.channels == 1:
        levels = img.pixels[:, :, 0].astype(np.intp)
        lut = _equalize_lut(levels)
        if lut is None:
            return EqualizeResult(img, True)
        return EqualizeResult(Image(lut[levels].astype(np.uint8)[:, :, None]), False)

    luma = np.clip(np.rint(img.luminance()), 0, LEVELS - 1).astype(np.intp)
    lut = _equalize_lut(luma)
    if lut is None:
        return EqualizeResult(img, True)
    new_luma = lut[luma]
    ratio = np.where(luma > 0, new_luma / np.maximum(luma, 1), 0.0)
    out = quantize(img.pixels.astype(np.float64) * ratio[:, :, None])
    return EqualizeResult(Image(out), False)


def detail_enhance(img: Image, k: float = DEFAULT_DETAIL_K) -> Image:
    """Contrast boost about mid-gray: ``g = (1 + k*(f - 128)) * f`` per channel.

    The raw formula is unbounded, so results are rounded and clamped to the
    8-bit range. ``k`` must be non-negative; ``k = 0`` is the identity.
    """
    if k < 0:
        raise ParameterError(f"detail enhancement constant must be >= 0, got {k}")
    f = img.pixels.astype(np.float64)
    g = (1.0 + k * (f - 128.0)) * f
    return Image(quantize(g))


@dataclass(frozen=True)
class StandardizerStats:
    """Per-channel mean and population standard deviation of unit-scaled pixels."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64).ravel()
        std = np.asarray(self.std, dtype=np.float64).ravel()
        if mean.shape != std.shape:
            raise ShapeError("mean and std must have one entry per channel")
        if np.any(std < 0):
            raise ParameterError("standard deviation must be non-negative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def channels(self) -> int:
        return self.mean.shape[0]

    @property
    def zero_variance(self) -> np.ndarray:
        """Boolean mask of channels whose std collapsed to zero."""
        return self.std == 0.0

    @property
    def effective_std(self) -> np.ndarray:
        """Std with zero-variance channels substituted by 1 for safe division."""
        return np.where(self.std == 0.0, 1.0, self.std)


def fit_standardizer(train_images: Sequence[Image]) -> StandardizerStats:
    """Fit per-channel stats over every training pixel, scaled to [0, 1].

    Uses the population definition of the standard deviation. Fit on
    training data only; the same stats are then applied to validation and
    test tensors.
    """
    if len(train_images) == 0:
        raise ParameterError("cannot fit a standardizer on an empty image list")
    channels = train_images[0].channels
    for im in train_images:
        if im.channels != channels:
            raise ShapeError("all training images must share a channel count")
    flat = np.concatenate(
        [im.pixels.reshape(-1, channels).astype(np.float64) / 255.0 for im in train_images]
    )
    return StandardizerStats(mean=flat.mean(axis=0), std=flat.std(axis=0))


def apply_standardizer(t: np.ndarray, stats: StandardizerStats) -> np.ndarray:
    """Z-score the trailing channel axis: ``z = (x - mean) / std``.

    Channels with zero fitted variance divide by 1 instead of 0.
    """
    t = np.asarray(t, dtype=np.float64)
    if t.shape[-1] != stats.channels:
        raise ShapeError(
            f"tensor has {t.shape[-1]} channels but stats were fit on {stats.channels}"
        )
    return (t - stats.mean) / stats.effective_std


def bilinear_sample(values: np.ndarray, yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
    """Bilinearly sample a (H, W, C) float array at fractional coordinates.

    Coordinates are clamped to the valid range, so out-of-bounds samples
    take the nearest edge value.
    """
    h, w = values.shape[:2]
    yy = np.clip(yy, 0.0, h - 1.0)
    xx = np.clip(xx, 0.0, w - 1.0)
    y0 = np.floor(yy).astype(np.intp)
    x0 = np.floor(xx).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (yy - y0)[..., None]
    fx = (xx - x0)[..., None]
    top = values[y0, x0] * (1.0 - fx) + values[y0, x1] * fx
    bot = values[y1, x0] * (1.0 - fx) + values[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def _resize_grid(n_in: int, n_out: int) -> np.ndarray:
    # Align-corners mapping: endpoints of the output grid hit the input
    # endpoints exactly, so a same-size resize is the identity.
    if n_out == 1:
        return np.zeros(1)
    return np.arange(n_out) * ((n_in - 1) / (n_out - 1))


def resize(img: Image, h: int, w: int) -> Image:
    """Bilinear resize to ``h`` x ``w``; channel count is preserved."""
    if h < 1 or w < 1:
        raise ShapeError(f"target size must be at least 1x1, got {h}x{w}")
    if h == img.height and w == img.width:
        return Image(img.pixels.copy())
    ys = _resize_grid(img.height, h)
    xs = _resize_grid(img.width, w)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    out = bilinear_sample(img.pixels.astype(np.float64), yy, xx)
    return Image(quantize(out))


class VariantKind(Enum):
    PLAIN = "plain"
    ROIN = "roin"
    ROIHEN = "roihen"
    ROIHEDEN = "roiheden"


@dataclass(frozen=True)
class PipelineVariant:
    """A named preprocessing chain plus the detail-enhancer constant.

    ``plain`` is the identity, ``roin`` applies ROI selection, ``roihen``
    adds histogram equalization, ``roiheden`` adds the detail enhancer
    (always in the order ROI -> HE -> DE).
    """

    kind: VariantKind = VariantKind.PLAIN
    detail_k: float = DEFAULT_DETAIL_K

    def __post_init__(self) -> None:
        if self.detail_k < 0:
            raise ParameterError("detail_k must be >= 0")

    @property
    def name(self) -> str:
        return self.kind.value

    @classmethod
    def from_name(cls, name: str, detail_k: float = DEFAULT_DETAIL_K) -> "PipelineVariant":
        try:
            kind = VariantKind(name.lower())
        except ValueError:
            valid = ", ".join(k.value for k in VariantKind)
            raise ParameterError(f"unknown pipeline variant {name!r} (expected one of {valid})")
        return cls(kind=kind, detail_k=detail_k)


def apply_pipeline(img: Image, variant: PipelineVariant) -> Image:
    """Run the variant's transform chain over one image."""
    if variant.kind is VariantKind.PLAIN:
        return img
    out = roi_select(img)
    if variant.kind is VariantKind.ROIN:
        return out
    out = hist_equalize(out).image
    if variant.kind is VariantKind.ROIHEN:
        return out
    return detail_enhance(out, variant.detail_k)


@dataclass
class Preprocessor:
    """Variant chain, resize target, and the standardizer fitted on training data.

    ``prepare`` yields the 8-bit image the network sees before scaling
    (variant transforms, channel fix-up, resize); ``to_tensor`` scales a
    prepared image to [0, 1] and applies the fitted z-score. Augmentation,
    when used, slots between the two stages.
    """

    variant: PipelineVariant
    target_hw: tuple[int, int]
    channels: int = 3
    stats: StandardizerStats | None = None

    def prepare(self, img: Image) -> Image:
        out = apply_pipeline(img, self.variant)
        if self.channels == 3:
            out = out.to_rgb()
        else:
            out = out.to_gray()
        return resize(out, self.target_hw[0], self.target_hw[1])

    def fit(self, images: Sequence[Image], prepared: bool = False) -> "Preprocessor":
        """Fit the standardizer; pass ``prepared=True`` if images are pre-transformed."""
        pool = list(images) if prepared else [self.prepare(im) for im in images]
        self.stats = fit_standardizer(pool)
        return self

    def to_tensor(self, prepared_img: Image) -> np.ndarray:
        if self.stats is None:
            raise ParameterError("preprocessor must be fitted before producing tensors")
        unit = prepared_img.pixels.astype(np.float64) / 255.0
        return apply_standardizer(unit, self.stats)

    def transform(self, img: Image) -> np.ndarray:
        return self.to_tensor(self.prepare(img))

    def with_stats(self, stats: StandardizerStats) -> "Preprocessor":
        return replace(self, stats=stats)
