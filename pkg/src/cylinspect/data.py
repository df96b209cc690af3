"""Datasets: synthetic cylinder images with ground-truth defect boxes, and
ingestion of real two-class image directories.

The generator renders a top-down view of a printed cylinder: a dark build
plate, a bright elliptical cylinder face whose size and position vary per
sample, horizontal layer lines, and Gaussian sensor noise. Defect samples
get exactly one injected anomaly (dark blob, crack, or shifted layer band)
with its bounding box recorded, so localization can be scored without any
manual annotation. Generation is deterministic per seed.

Directory layout (both for export and ingestion)::

    root/
      defect/0000.png ...
      non_defect/0000.png ...
      ground_truth.json        # optional: filename -> [x0, y0, x1, y1]
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError

from .errors import DataError, ParameterError
from .imaging import Image
from .rng import substream

logger = logging.getLogger(__name__)

Box = tuple[int, int, int, int]  # (x0, y0, x1, y1), inclusive pixel coords


class Label(Enum):
    NON_DEFECT = 0
    DEFECT = 1  # positive class; index 1 of the classifier's softmax


class DefectKind(Enum):
    BLOB = "blob"
    CRACK = "crack"
    LAYER_SHIFT = "layer_shift"


@dataclass(frozen=True)
class Sample:
    image: Image
    label: Label
    source_id: str
    box: Box | None = None  # ground-truth defect box, defect samples only

    def __post_init__(self) -> None:
        if self.label is Label.NON_DEFECT and self.box is not None:
            raise ParameterError("non-defect samples must not carry a defect box")
        if self.box is not None:
            x0, y0, x1, y1 = self.box
            if not (0 <= x0 <= x1 < self.image.width and 0 <= y0 <= y1 < self.image.height):
                raise ParameterError(f"defect box {self.box} outside image bounds")


@dataclass
class LabeledDataset:
    samples: list[Sample] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i: int) -> Sample:
        return self.samples[i]

    def labels(self) -> np.ndarray:
        return np.array([s.label.value for s in self.samples], dtype=np.int64)

    def count(self, label: Label) -> int:
        return sum(1 for s in self.samples if s.label is label)

    def by_label(self, label: Label) -> list[Sample]:
        return [s for s in self.samples if s.label is label]

    def subset(self, indices) -> "LabeledDataset":
        return LabeledDataset([self.samples[i] for i in indices])


@dataclass(frozen=True)
class SynthConfig:
    """Knobs of the synthetic generator.

    ``size`` is the square image side (>= 32). ``layer_spacing`` is the
    pixel period of the horizontal print lines; ``noise`` the Gaussian
    sigma added everywhere.
    """

    size: int = 64
    n_defect: int = 0
    n_non_defect: int = 0
    defect_kinds: tuple[DefectKind, ...] = (
        DefectKind.BLOB,
        DefectKind.CRACK,
        DefectKind.LAYER_SHIFT,
    )
    layer_spacing: float = 6.0
    noise: float = 5.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.size < 32:
            raise ParameterError("synthetic image size must be >= 32")
        if self.n_defect < 0 or self.n_non_defect < 0:
            raise ParameterError("sample counts must be >= 0")
        if not self.defect_kinds:
            raise ParameterError("at least one defect kind must be enabled")


@dataclass(frozen=True)
class _Face:
    cx: float
    cy: float
    rx: float
    ry: float
    level: float


def _render_base(rng: np.random.Generator, cfg: SynthConfig) -> tuple[np.ndarray, _Face]:
    """Clean cylinder image as float64 (H, W), plus the face geometry."""
    n = cfg.size
    ys, xs = np.meshgrid(np.arange(n, dtype=np.float64), np.arange(n, dtype=np.float64), indexing="ij")

    face = _Face(
        cx=n / 2 + rng.uniform(-0.06, 0.06) * n,
        cy=n / 2 + rng.uniform(-0.06, 0.06) * n,
        rx=rng.uniform(0.26, 0.40) * n,
        ry=rng.uniform(0.24, 0.38) * n,
        level=rng.uniform(185.0, 215.0),
    )
    inside = ((xs - face.cx) / face.rx) ** 2 + ((ys - face.cy) / face.ry) ** 2 <= 1.0

    background = rng.uniform(18.0, 30.0)
    phase = rng.uniform(0.0, 2 * np.pi)
    spacing = cfg.layer_spacing * rng.uniform(0.85, 1.15)
    lines = 5.0 * np.sin(2 * np.pi * ys / spacing + phase)
    img = np.where(inside, face.level + lines, background)
    return img, face


def _face_mask(face: _Face, n: int) -> np.ndarray:
    ys, xs = np.meshgrid(np.arange(n, dtype=np.float64), np.arange(n, dtype=np.float64), indexing="ij")
    return ((xs - face.cx) / face.rx) ** 2 + ((ys - face.cy) / face.ry) ** 2 <= 1.0


def _mask_box(mask: np.ndarray) -> Box:
    ys, xs = np.nonzero(mask)
    return int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())


def _inject_blob(img: np.ndarray, face: _Face, rng: np.random.Generator) -> Box:
    n = img.shape[0]
    ys, xs = np.meshgrid(np.arange(n, dtype=np.float64), np.arange(n, dtype=np.float64), indexing="ij")
    # Keep the blob comfortably inside the face so its box stays on the face.
    bx = face.cx + rng.uniform(-0.4, 0.4) * face.rx
    by = face.cy + rng.uniform(-0.4, 0.4) * face.ry
    brx = rng.uniform(0.24, 0.40) * face.rx
    bry = rng.uniform(0.24, 0.40) * face.ry
    blob = ((xs - bx) / max(brx, 2.0)) ** 2 + ((ys - by) / max(bry, 2.0)) ** 2 <= 1.0
    blob &= _face_mask(face, n)
    img[blob] -= rng.uniform(100.0, 140.0)
    return _mask_box(blob)


def _inject_crack(img: np.ndarray, face: _Face, rng: np.random.Generator) -> Box:
    n = img.shape[0]
    ys, xs = np.meshgrid(np.arange(n, dtype=np.float64), np.arange(n, dtype=np.float64), indexing="ij")
    # Shallow-angle crack (like a layer separation), thick enough to dominate
    # its own bounding box.
    angle = np.deg2rad(rng.uniform(-18.0, 18.0))
    cx = face.cx + rng.uniform(-0.3, 0.3) * face.rx
    cy = face.cy + rng.uniform(-0.4, 0.4) * face.ry
    half_len = rng.uniform(0.5, 0.8) * face.rx
    thickness = rng.uniform(1.2, 2.0)
    dx, dy = np.cos(angle), np.sin(angle)
    # Distance from each pixel to the segment through (cx, cy).
    px, py = xs - cx, ys - cy
    t = np.clip(px * dx + py * dy, -half_len, half_len)
    dist = np.hypot(px - t * dx, py - t * dy)
    crack = dist <= thickness
    crack &= _face_mask(face, n)
    img[crack] -= rng.uniform(110.0, 140.0)
    return _mask_box(crack)


def _inject_layer_shift(img: np.ndarray, face: _Face, rng: np.random.Generator) -> Box:
    n = img.shape[0]
    band_h = max(3, int(rng.uniform(0.25, 0.45) * face.ry))
    y0 = int(np.clip(face.cy + rng.uniform(-0.5, 0.2) * face.ry, 1, n - band_h - 1))
    y1 = y0 + band_h - 1
    shift = int(rng.uniform(4.0, 8.0)) * (1 if rng.integers(0, 2) else -1)
    band = img[y0 : y1 + 1]
    if shift > 0:
        band[:, shift:] = band[:, :-shift]
    else:
        band[:, :shift] = band[:, -shift:]
    # A shifted layer catches the light differently; darken it so the band
    # is visible even where face slides onto face.
    mask = _face_mask(face, n)
    band_mask = np.zeros_like(mask)
    band_mask[y0 : y1 + 1] = mask[y0 : y1 + 1]
    img[band_mask] -= rng.uniform(30.0, 45.0)
    if not band_mask.any():
        # Band missed the face entirely; fall back to a blob defect.
        return _inject_blob(img, face, rng)
    return _mask_box(band_mask)


_INJECTORS = {
    DefectKind.BLOB: _inject_blob,
    DefectKind.CRACK: _inject_crack,
    DefectKind.LAYER_SHIFT: _inject_layer_shift,
}


def _to_rgb_image(gray: np.ndarray, rng: np.random.Generator, noise: float) -> Image:
    # Slightly warm tint so the RGB channels are distinct but correlated.
    tint = np.array([1.0, 0.97, 0.90])
    rgb = gray[:, :, None] * tint[None, None, :]
    if noise > 0:
        rgb = rgb + rng.normal(0.0, noise, size=rgb.shape)
    return Image(np.clip(np.rint(rgb), 0, 255).astype(np.uint8))


def render_pair(cfg: SynthConfig, index: int) -> tuple[Image, Image, Box, DefectKind]:
    """Render sample ``index`` twice: clean, and with one injected defect.

    Both renders share the base geometry and noise draw, so the pair is
    pixel-identical outside the defect. Used for defect samples and for
    measuring how much a defect actually changes its box.
    """
    rng = substream(cfg.seed, f"synth.{index}")
    base, face = _render_base(rng, cfg)
    kind = cfg.defect_kinds[int(rng.integers(0, len(cfg.defect_kinds)))]
    defected = base.copy()
    box = _INJECTORS[kind](defected, face, rng)
    noise_rng = substream(cfg.seed, f"synth.noise.{index}")
    state = noise_rng.bit_generator.state
    clean_img = _to_rgb_image(base, noise_rng, cfg.noise)
    noise_rng.bit_generator.state = state  # same noise field for both renders
    defect_img = _to_rgb_image(defected, noise_rng, cfg.noise)
    return clean_img, defect_img, box, kind


def generate_synthetic_dataset(cfg: SynthConfig) -> LabeledDataset:
    """Generate ``n_defect`` + ``n_non_defect`` samples, defects first."""
    if cfg.n_defect + cfg.n_non_defect == 0:
        raise DataError("synthetic dataset needs at least one sample")
    samples: list[Sample] = []
    for i in range(cfg.n_defect):
        _, img, box, kind = render_pair(cfg, i)
        samples.append(Sample(img, Label.DEFECT, f"synth-{kind.value}-{i:04d}", box))
    for j in range(cfg.n_non_defect):
        clean, _, _, _ = render_pair(cfg, cfg.n_defect + j)
        samples.append(Sample(clean, Label.NON_DEFECT, f"synth-clean-{cfg.n_defect + j:04d}"))
    return LabeledDataset(samples)


# --- image file IO -----------------------------------------------------------

def load_image(path: Path | str) -> Image:
    """Load a PNG/JPEG as an 8-bit image (RGB kept, anything else to gray)."""
    with PILImage.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if "A" in im.mode or im.mode in ("P", "CMYK", "YCbCr") else "L")
        arr = np.asarray(im, dtype=np.uint8)
    return Image(arr)


def save_image(img: Image, path: Path | str) -> None:
    arr = img.pixels[:, :, 0] if img.channels == 1 else img.pixels
    PILImage.fromarray(arr).save(path)


_DEFECT_DIR = "defect"
_NON_DEFECT_DIR = "non_defect"
_GROUND_TRUTH = "ground_truth.json"
_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


def export_dataset(ds: LabeledDataset, root: Path | str) -> None:
    """Write the two-class directory layout plus ground_truth.json."""
    root = Path(root)
    (root / _DEFECT_DIR).mkdir(parents=True, exist_ok=True)
    (root / _NON_DEFECT_DIR).mkdir(parents=True, exist_ok=True)
    boxes: dict[str, list[int]] = {}
    counters = {Label.DEFECT: 0, Label.NON_DEFECT: 0}
    for s in ds:
        sub = _DEFECT_DIR if s.label is Label.DEFECT else _NON_DEFECT_DIR
        name = f"{counters[s.label]:04d}.png"
        counters[s.label] += 1
        save_image(s.image, root / sub / name)
        if s.box is not None:
            boxes[f"{sub}/{name}"] = list(s.box)
    with open(root / _GROUND_TRUTH, "w") as f:
        json.dump(boxes, f, indent=1, sort_keys=True)


def ingest_directory(root: Path | str) -> LabeledDataset:
    """Read a two-class image directory into a dataset.

    Files are labeled by their subdirectory and ordered by filename.
    Undecodable files are skipped with a warning; a missing class
    subdirectory is an error. Boxes are restored from ground_truth.json
    when present.
    """
    root = Path(root)
    boxes: dict[str, list[int]] = {}
    gt_path = root / _GROUND_TRUTH
    if gt_path.is_file():
        with open(gt_path) as f:
            boxes = json.load(f)

    samples: list[Sample] = []
    skipped = 0
    for sub, label in ((_DEFECT_DIR, Label.DEFECT), (_NON_DEFECT_DIR, Label.NON_DEFECT)):
        sub_dir = root / sub
        if not sub_dir.is_dir():
            raise DataError(f"missing class directory: {sub_dir}")
        for path in sorted(sub_dir.iterdir()):
            if path.suffix.lower() not in _IMAGE_SUFFIXES:
                continue
            try:
                img = load_image(path)
            except (UnidentifiedImageError, OSError, ValueError):
                logger.warning("skipping undecodable image file: %s", path)
                skipped += 1
                continue
            key = f"{sub}/{path.name}"
            box = tuple(boxes[key]) if label is Label.DEFECT and key in boxes else None
            samples.append(Sample(img, label, key, box))
    ds = LabeledDataset(samples)
    logger.info(
        "ingested %d images (%d defect, %d non-defect, %d skipped) from %s",
        len(ds), ds.count(Label.DEFECT), ds.count(Label.NON_DEFECT), skipped, root,
    )
    return ds
