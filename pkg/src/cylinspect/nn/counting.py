"""Parameter and FLOP accounting.

Convention: one multiply-accumulate counts as two floating-point
operations, and only convolution, separable-convolution, and dense layers
contribute (pooling, activations, dropout, and softmax are free). This is
the convention under which the published complexity figures for the
reference architectures are reproduced.

Counts can be computed symbolically from ``LayerSpec`` sequences (no
parameter arrays needed, so the 138M-parameter reference configuration
costs nothing to count) or from a materialized ``ModelGraph``.
"""

from __future__ import annotations

from typing import Sequence

from .model import ModelGraph
from .specs import (
    LayerSpec,
    chain_shapes,
    custom_head_specs,
    flop_count,
    param_count,
    scratch_backbone_specs,
    vgg16_backbone_specs,
    vgg16_classifier_specs,
)

FLOP_CONVENTION = "2 FLOPs per multiply-accumulate over conv, separable-conv, and dense layers"


def _resolve(model_or_specs, input_shape):
    if isinstance(model_or_specs, ModelGraph):
        specs = [layer.spec for layer in model_or_specs.layers]
        input_shape = input_shape or model_or_specs.input_shape
    else:
        specs = list(model_or_specs)
        if input_shape is None:
            raise ValueError("input_shape is required when counting from specs")
    return specs, tuple(input_shape)


def count_params(model_or_specs, input_shape: tuple[int, ...] | None = None) -> int:
    """Total weight and bias elements, regardless of trainability."""
    specs, input_shape = _resolve(model_or_specs, input_shape)
    shapes = chain_shapes(specs, input_shape)
    return sum(param_count(spec, shapes[i]) for i, spec in enumerate(specs))


def count_flops(model_or_specs, input_shape: tuple[int, ...] | None = None) -> int:
    """Forward-pass FLOPs at the given input shape (see FLOP_CONVENTION)."""
    specs, input_shape = _resolve(model_or_specs, input_shape)
    shapes = chain_shapes(specs, input_shape)
    return sum(flop_count(spec, shapes[i]) for i, spec in enumerate(specs))


def per_layer_table(specs: Sequence[LayerSpec], input_shape: tuple[int, ...]) -> list[dict]:
    """Layer-by-layer ledger of shapes, parameters, and FLOPs."""
    shapes = chain_shapes(specs, input_shape)
    rows = []
    for i, spec in enumerate(specs):
        rows.append(
            {
                "layer": spec.kind.value,
                "input_shape": shapes[i],
                "output_shape": shapes[i + 1],
                "params": param_count(spec, shapes[i]),
                "flops": flop_count(spec, shapes[i]),
            }
        )
    return rows


# Countable configurations this toolkit can build or reference by name.
def named_architecture(name: str) -> tuple[list[LayerSpec], tuple[int, int, int]]:
    catalog = {
        "modified-vgg16": (
            vgg16_backbone_specs() + custom_head_specs(),
            (224, 224, 3),
        ),
        "vgg16": (
            vgg16_backbone_specs() + vgg16_classifier_specs(),
            (224, 224, 3),
        ),
        "scratch": (
            scratch_backbone_specs() + custom_head_specs(),
            (64, 64, 3),
        ),
    }
    if name not in catalog:
        raise KeyError(name)
    return catalog[name]


# Published complexity rows for the transfer-learning models compared against;
# (FLOPs in millions, parameters in millions). Reported for reference only,
# not recomputed here.
PUBLISHED_COMPLEXITY: dict[str, tuple[float, float]] = {
    "vgg16": (30960.0, 138.0),
    "resnet50": (7751.0, 23.58),
    "resnet101": (15195.0, 42.65),
    "vgg19": (39037.83, 20.02),
    "inception-resnetv2": (26382.0, 55.87),
    "modified-vgg16": (30713.0, 15.0),
}
