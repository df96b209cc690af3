"""Layer descriptions, shape propagation, and the architecture catalog.

A ``LayerSpec`` describes one layer without its parameter arrays, which is
enough to derive output shapes, parameter counts, and FLOPs, and to rebuild
a model from a checkpoint. Convolutions here are stride-1 (downsampling is
done by the pooling layers, as in the architectures this toolkit builds).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Sequence

from ..errors import ParameterError, ShapeError

VALID = "valid"
SAME = "same"

RELU = "relu"
NONE = "none"


class LayerKind(Enum):
    CONV2D = "Conv2D"
    SEPARABLE_CONV2D = "SeparableConv2D"
    AVG_POOL2D = "AveragePooling2D"
    MAX_POOL2D = "MaxPool2D"
    FLATTEN = "Flatten"
    DENSE = "Dense"
    DROPOUT = "Dropout"
    SOFTMAX = "Softmax"


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    filters: int | None = None
    kernel_size: int | None = None
    padding: str = VALID
    units: int | None = None
    rate: float | None = None
    pool_size: int | None = None
    activation: str = NONE

    def __post_init__(self) -> None:
        if self.kind in (LayerKind.CONV2D, LayerKind.SEPARABLE_CONV2D):
            if not self.filters or self.filters < 1:
                raise ParameterError(f"{self.kind.value} needs filters >= 1")
            if not self.kernel_size or self.kernel_size < 1:
                raise ParameterError(f"{self.kind.value} needs kernel_size >= 1")
            if self.padding not in (VALID, SAME):
                raise ParameterError(f"padding must be 'valid' or 'same', got {self.padding!r}")
        if self.kind in (LayerKind.AVG_POOL2D, LayerKind.MAX_POOL2D):
            if not self.pool_size or self.pool_size < 1:
                raise ParameterError("pooling needs pool_size >= 1")
        if self.kind is LayerKind.DENSE and (not self.units or self.units < 1):
            raise ParameterError("Dense needs units >= 1")
        if self.kind is LayerKind.DROPOUT:
            if self.rate is None or not 0.0 <= self.rate < 1.0:
                raise ParameterError(f"dropout rate must lie in [0, 1), got {self.rate}")
        if self.activation not in (RELU, NONE):
            raise ParameterError(f"activation must be 'relu' or 'none', got {self.activation!r}")

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if v is not None}
        d["kind"] = self.kind.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        d = dict(d)
        d["kind"] = LayerKind(d["kind"])
        return cls(**d)


def conv2d(filters: int, kernel_size: int = 3, padding: str = SAME, activation: str = RELU) -> LayerSpec:
    return LayerSpec(LayerKind.CONV2D, filters=filters, kernel_size=kernel_size,
                     padding=padding, activation=activation)


def separable_conv2d(filters: int, kernel_size: int = 3, padding: str = VALID,
                     activation: str = NONE) -> LayerSpec:
    return LayerSpec(LayerKind.SEPARABLE_CONV2D, filters=filters, kernel_size=kernel_size,
                     padding=padding, activation=activation)


def avg_pool2d(pool_size: int = 2) -> LayerSpec:
    return LayerSpec(LayerKind.AVG_POOL2D, pool_size=pool_size)


def max_pool2d(pool_size: int = 2) -> LayerSpec:
    return LayerSpec(LayerKind.MAX_POOL2D, pool_size=pool_size)


def flatten() -> LayerSpec:
    return LayerSpec(LayerKind.FLATTEN)


def dense(units: int, activation: str = NONE) -> LayerSpec:
    return LayerSpec(LayerKind.DENSE, units=units, activation=activation)


def dropout(rate: float = 0.5) -> LayerSpec:
    return LayerSpec(LayerKind.DROPOUT, rate=rate)


def softmax() -> LayerSpec:
    return LayerSpec(LayerKind.SOFTMAX)


def conv_output_hw(h: int, w: int, k: int, padding: str) -> tuple[int, int]:
    if padding == SAME:
        return h, w
    if h < k or w < k:
        raise ShapeError(f"kernel {k} larger than input {h}x{w} with valid padding")
    return h - k + 1, w - k + 1


def out_shape(spec: LayerSpec, in_shape: tuple[int, ...]) -> tuple[int, ...]:
    """Output shape of one layer for a single sample (no batch axis)."""
    kind = spec.kind
    if kind in (LayerKind.CONV2D, LayerKind.SEPARABLE_CONV2D):
        if len(in_shape) != 3:
            raise ShapeError(f"{kind.value} expects (H, W, C) input, got {in_shape}")
        h, w = conv_output_hw(in_shape[0], in_shape[1], spec.kernel_size, spec.padding)
        return (h, w, spec.filters)
    if kind in (LayerKind.AVG_POOL2D, LayerKind.MAX_POOL2D):
        if len(in_shape) != 3:
            raise ShapeError(f"{kind.value} expects (H, W, C) input, got {in_shape}")
        p = spec.pool_size
        if in_shape[0] < p or in_shape[1] < p:
            raise ShapeError(f"pool size {p} larger than input {in_shape[:2]}")
        return (in_shape[0] // p, in_shape[1] // p, in_shape[2])
    if kind is LayerKind.FLATTEN:
        return (int(math.prod(in_shape)),)
    if kind is LayerKind.DENSE:
        if len(in_shape) != 1:
            raise ShapeError(f"Dense expects a flat input, got {in_shape}")
        return (spec.units,)
    return in_shape  # dropout / softmax


def chain_shapes(specs: Sequence[LayerSpec], input_shape: tuple[int, ...]) -> list[tuple[int, ...]]:
    """Input shape of every layer in order, plus the final output shape."""
    shapes = [tuple(input_shape)]
    for spec in specs:
        shapes.append(out_shape(spec, shapes[-1]))
    return shapes


def param_count(spec: LayerSpec, in_shape: tuple[int, ...]) -> int:
    """Weight plus bias element count of one layer."""
    kind = spec.kind
    if kind is LayerKind.CONV2D:
        k, c, f = spec.kernel_size, in_shape[2], spec.filters
        return k * k * c * f + f
    if kind is LayerKind.SEPARABLE_CONV2D:
        # Depthwise k*k per channel, pointwise 1x1 mixing, one bias per filter.
        k, c, f = spec.kernel_size, in_shape[2], spec.filters
        return k * k * c + c * f + f
    if kind is LayerKind.DENSE:
        return in_shape[0] * spec.units + spec.units
    return 0


def flop_count(spec: LayerSpec, in_shape: tuple[int, ...]) -> int:
    """FLOPs of one layer at the given input, counting 2 per multiply-accumulate.

    Only convolution, separable convolution, and dense layers contribute;
    pooling, activations, dropout, and softmax are not counted.
    """
    kind = spec.kind
    if kind is LayerKind.CONV2D:
        h, w = conv_output_hw(in_shape[0], in_shape[1], spec.kernel_size, spec.padding)
        macs = h * w * spec.filters * spec.kernel_size * spec.kernel_size * in_shape[2]
        return 2 * macs
    if kind is LayerKind.SEPARABLE_CONV2D:
        h, w = conv_output_hw(in_shape[0], in_shape[1], spec.kernel_size, spec.padding)
        c = in_shape[2]
        depthwise = h * w * c * spec.kernel_size * spec.kernel_size
        pointwise = h * w * c * spec.filters
        return 2 * (depthwise + pointwise)
    if kind is LayerKind.DENSE:
        return 2 * in_shape[0] * spec.units
    return 0


# --- architecture catalog ----------------------------------------------------

def vgg16_backbone_specs() -> list[LayerSpec]:
    """The classic 13-convolution feature extractor (five 2x downsamplings)."""
    specs: list[LayerSpec] = []
    for block_filters, n_convs in ((64, 2), (128, 2), (256, 3), (512, 3), (512, 3)):
        specs.extend(conv2d(block_filters) for _ in range(n_convs))
        specs.append(max_pool2d(2))
    return specs


def vgg16_classifier_specs(n_classes: int = 1000) -> list[LayerSpec]:
    """The original fully-connected classifier stack."""
    return [flatten(), dense(4096, RELU), dense(4096, RELU), dense(n_classes), softmax()]


def custom_head_specs(padding: str = VALID) -> list[LayerSpec]:
    """The two-class head: separable conv, average pool, and two dense layers."""
    return [
        separable_conv2d(64, 3, padding=padding),
        avg_pool2d(2),
        flatten(),
        dense(64, RELU),
        dropout(0.5),
        dense(2),
        softmax(),
    ]


def scratch_backbone_specs() -> list[LayerSpec]:
    """Small three-stage backbone for desk-scale runs (three 2x downsamplings)."""
    specs: list[LayerSpec] = []
    for filters in (8, 16, 32):
        specs.append(conv2d(filters, 3, padding=SAME, activation=RELU))
        specs.append(max_pool2d(2))
    return specs
