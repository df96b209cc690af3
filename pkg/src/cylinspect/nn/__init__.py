"""Tensor layers, the classifier graph, optimization, and model accounting."""

from .checkpoint import CheckpointData, load_checkpoint, save_checkpoint
from .counting import (
    FLOP_CONVENTION,
    PUBLISHED_COMPLEXITY,
    count_flops,
    count_params,
    named_architecture,
    per_layer_table,
)
from .layers import Mode, build_layer
from .loss import bce_grad_probs, bce_loss
from .model import (
    ForwardCache,
    ModelGraph,
    build_model,
    last_separable_conv_index,
    modified_vgg16,
    scratch_model,
)
from .optim import AdamState, adam_step
from . import specs

__all__ = [
    "AdamState",
    "CheckpointData",
    "FLOP_CONVENTION",
    "ForwardCache",
    "Mode",
    "ModelGraph",
    "PUBLISHED_COMPLEXITY",
    "adam_step",
    "bce_grad_probs",
    "bce_loss",
    "build_layer",
    "build_model",
    "count_flops",
    "count_params",
    "last_separable_conv_index",
    "load_checkpoint",
    "modified_vgg16",
    "named_architecture",
    "per_layer_table",
    "save_checkpoint",
    "scratch_model",
    "specs",
]
