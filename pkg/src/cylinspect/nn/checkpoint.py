"""Binary checkpoint files.

Layout (all multi-byte integers little-endian)::

    magic          4 bytes  b"P3DC"
    version        u32      currently 1
    meta count     u32
      per entry:   u32 key length, key (utf-8), u32 value length, value (utf-8)
    param count    u32
      per record:  u32 name length, name (utf-8), u8 ndim, ndim x u32 dims,
                   dims product x f32 (little-endian) data

The metadata entries carry the architecture (as JSON), the fitted
standardizer, the pipeline variant, and free-form training metadata, so a
checkpoint is a complete inference bundle. Parameters are stored as 32-bit
floats; a float32 model round-trips bit-exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import BadMagicError, CheckpointError, TruncatedError, VersionError
from ..imaging import PipelineVariant, StandardizerStats
from .model import ModelGraph, build_model
from .specs import LayerSpec

MAGIC = b"P3DC"
FORMAT_VERSION = 1

_META_ARCHITECTURE = "architecture"
_META_STANDARDIZER = "standardizer"
_META_VARIANT = "variant"
_META_TRAINING = "training"


@dataclass
class CheckpointData:
    model: ModelGraph
    stats: StandardizerStats | None
    variant: PipelineVariant | None
    metadata: dict
    version: int


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedError(
                f"checkpoint ended at byte {len(self.data)} while reading {n} more"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u8(self) -> int:
        return self.take(1)[0]

    def text(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def _write_text(f, s: str) -> None:
    raw = s.encode("utf-8")
    f.write(struct.pack("<I", len(raw)))
    f.write(raw)


def save_checkpoint(
    model: ModelGraph,
    path: Path | str,
    stats: StandardizerStats | None = None,
    variant: PipelineVariant | None = None,
    metadata: dict | None = None,
) -> None:
    """Write the model plus its preprocessing context to ``path``."""
    arch = {
        "backbone": [s.to_dict() for s in model.backbone_specs()],
        "head": [s.to_dict() for s in model.head_specs()],
        "input_shape": list(model.input_shape),
        "backbone_trainable": model.backbone_trainable,
    }
    meta: dict[str, str] = {_META_ARCHITECTURE: json.dumps(arch, sort_keys=True)}
    if stats is not None:
        meta[_META_STANDARDIZER] = json.dumps(
            {"mean": stats.mean.tolist(), "std": stats.std.tolist()}
        )
    if variant is not None:
        meta[_META_VARIANT] = json.dumps({"kind": variant.name, "detail_k": variant.detail_k})
    if metadata:
        meta[_META_TRAINING] = json.dumps(metadata, sort_keys=True)

    params = model.all_params()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<I", len(meta)))
        for key in sorted(meta):
            _write_text(f, key)
            _write_text(f, meta[key])
        f.write(struct.pack("<I", len(params)))
        for name, arr in params.items():
            _write_text(f, name)
            f.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<I", dim))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path: Path | str) -> CheckpointData:
    """Rebuild the model described by the file and restore its parameters."""
    with open(path, "rb") as f:
        reader = _Reader(f.read())

    if reader.take(4) != MAGIC:
        raise BadMagicError(f"{path}: not a checkpoint file (bad magic bytes)")
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: format version {version} not supported (expected {FORMAT_VERSION})")

    meta: dict[str, str] = {}
    for _ in range(reader.u32()):
        key = reader.text()
        meta[key] = reader.text()

    if _META_ARCHITECTURE not in meta:
        raise CheckpointError(f"{path}: missing architecture metadata")
    arch = json.loads(meta[_META_ARCHITECTURE])
    model = build_model(
        [LayerSpec.from_dict(d) for d in arch["backbone"]],
        [LayerSpec.from_dict(d) for d in arch["head"]],
        tuple(arch["input_shape"]),
        backbone_trainable=bool(arch.get("backbone_trainable", False)),
        init=False,
    )

    expected = model.all_params()
    n_params = reader.u32()
    if n_params != len(expected):
        raise CheckpointError(
            f"{path}: {n_params} parameter records but architecture declares {len(expected)}"
        )
    for _ in range(n_params):
        name = reader.text()
        if name not in expected:
            raise CheckpointError(f"{path}: unexpected parameter record {name!r}")
        ndim = reader.u8()
        shape = tuple(reader.u32() for _ in range(ndim))
        if shape != expected[name].shape:
            raise CheckpointError(
                f"{path}: parameter {name!r} has shape {shape}, expected {expected[name].shape}"
            )
        count = int(np.prod(shape)) if shape else 1
        raw = reader.take(4 * count)
        expected[name][...] = np.frombuffer(raw, dtype="<f4").reshape(shape)

    stats = None
    if _META_STANDARDIZER in meta:
        d = json.loads(meta[_META_STANDARDIZER])
        stats = StandardizerStats(mean=np.array(d["mean"]), std=np.array(d["std"]))
    variant = None
    if _META_VARIANT in meta:
        d = json.loads(meta[_META_VARIANT])
        variant = PipelineVariant.from_name(d["kind"], detail_k=d.get("detail_k", 0.005))
    metadata = json.loads(meta[_META_TRAINING]) if _META_TRAINING in meta else {}
    return CheckpointData(model=model, stats=stats, variant=variant, metadata=metadata, version=version)
