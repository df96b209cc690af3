"""The two-part classifier graph: frozen-able backbone plus trainable head.

``ModelGraph`` owns materialized layers, runs batched forward passes, and
backpropagates the cross-entropy gradient into a flat ``{name: grad}``
dict aligned with ``trainable_params()``. The backbone is frozen by
default (transfer-learning style): its gradients are neither computed nor
returned unless ``backbone_trainable`` is set.

Forward caches are single-use: ``backward`` consumes the cache it is given
and rejects caches produced by a different model instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ParameterError, ShapeError, StaleCacheError
from ..rng import STREAM_INIT, substream
from .layers import Layer, Mode, build_layer
from .loss import bce_grad_probs
from .specs import (
    LayerKind,
    LayerSpec,
    chain_shapes,
    custom_head_specs,
    scratch_backbone_specs,
    vgg16_backbone_specs,
)

DEFAULT_INPUT_SHAPE = (224, 224, 3)


@dataclass
class ForwardCache:
    """Per-layer caches from one forward pass, consumed by one backward pass."""

    model_id: int
    mode: Mode
    batch_size: int
    probs: np.ndarray
    layer_caches: list | None = None
    layer_outputs: list[np.ndarray] | None = None
    consumed: bool = False


@dataclass
class ModelGraph:
    backbone: list[Layer]
    head: list[Layer]
    input_shape: tuple[int, int, int]
    backbone_trainable: bool = False
    dtype: np.dtype = field(default=np.dtype(np.float32))

    @property
    def layers(self) -> list[Layer]:
        return [*self.backbone, *self.head]

    def backbone_specs(self) -> list[LayerSpec]:
        return [layer.spec for layer in self.backbone]

    def head_specs(self) -> list[LayerSpec]:
        return [layer.spec for layer in self.head]

    # --- parameter access ---------------------------------------------------

    def _named_layers(self):
        for i, layer in enumerate(self.backbone):
            yield f"backbone.{i}", layer
        for i, layer in enumerate(self.head):
            yield f"head.{i}", layer

    def all_params(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for prefix, layer in self._named_layers():
            for pname, arr in layer.params.items():
                out[f"{prefix}.{pname}"] = arr
        return out

    def trainable_params(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for prefix, layer in self._named_layers():
            if prefix.startswith("backbone.") and not self.backbone_trainable:
                continue
            for pname, arr in layer.params.items():
                out[f"{prefix}.{pname}"] = arr
        return out

    def set_params(self, values: dict[str, np.ndarray]) -> None:
        current = self.all_params()
        for name, arr in values.items():
            if name not in current:
                raise ParameterError(f"unknown parameter {name!r}")
            if current[name].shape != arr.shape:
                raise ShapeError(
                    f"parameter {name!r}: shape {arr.shape} != expected {current[name].shape}"
                )
            current[name][...] = arr.astype(current[name].dtype)

    # --- forward / backward ---------------------------------------------------

    def _check_batch(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=self.dtype)
        if batch.ndim != 4 or batch.shape[1:] != tuple(self.input_shape):
            raise ShapeError(
                f"batch shape {batch.shape} does not match input shape (N, {self.input_shape})"
            )
        return batch

    def forward(
        self,
        batch: np.ndarray,
        mode: Mode = Mode.INFER,
        rng: np.random.Generator | None = None,
        need_cache: bool = False,
        record_outputs: bool = False,
    ) -> tuple[np.ndarray, ForwardCache]:
        """Run the full graph; returns per-sample class probabilities.

        ``need_cache`` retains per-layer caches for a backward pass;
        ``record_outputs`` additionally keeps every layer's output array
        (used by the explanation code).
        """
        x = self._check_batch(batch)
        caches: list | None = [] if need_cache else None
        outputs: list[np.ndarray] | None = [] if record_outputs else None
        for layer in self.layers:
            x, cache = layer.forward(x, mode, rng)
            if caches is not None:
                caches.append(cache)
            if outputs is not None:
                outputs.append(x)
        if not np.all(np.isfinite(x)):
            raise ShapeError("forward pass produced non-finite probabilities")
        return x, ForwardCache(
            model_id=id(self),
            mode=mode,
            batch_size=batch.shape[0],
            probs=x,
            layer_caches=caches,
            layer_outputs=outputs,
        )

    def backbone_forward(self, batch: np.ndarray) -> np.ndarray:
        """Feature tensor from the backbone's last stage."""
        x = self._check_batch(batch)
        for layer in self.backbone:
            x, _ = layer.forward(x, Mode.INFER, None)
        return x

    def backward(self, cache: ForwardCache, y: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of the mean cross-entropy loss for trainable parameters."""
        if cache.model_id != id(self) or cache.layer_caches is None:
            raise StaleCacheError("cache does not belong to this model or was not retained")
        if cache.consumed:
            raise StaleCacheError("forward cache has already been consumed")
        if len(y) != cache.batch_size:
            raise ShapeError("label count does not match the cached batch size")
        cache.consumed = True

        dy = bce_grad_probs(np.asarray(y), cache.probs)
        grads: dict[str, np.ndarray] = {}
        n_backbone = len(self.backbone)
        named = list(self._named_layers())
        first_trainable = 0 if self.backbone_trainable else n_backbone
        for idx in range(len(named) - 1, first_trainable - 1, -1):
            prefix, layer = named[idx]
            need_dx = idx > first_trainable
            dy, layer_grads = layer.backward(dy, cache.layer_caches[idx], need_dx=need_dx)
            for pname, g in layer_grads.items():
                grads[f"{prefix}.{pname}"] = g
        return grads


def build_model(
    backbone_specs: list[LayerSpec],
    head_specs: list[LayerSpec],
    input_shape: tuple[int, int, int],
    seed: int = 0,
    dtype=np.float32,
    backbone_trainable: bool = False,
    init: bool = True,
) -> ModelGraph:
    """Materialize layers for the given specs, drawing weights from the
    ``init`` substream of ``seed``."""
    rng = substream(seed, STREAM_INIT) if init else None
    shapes = chain_shapes([*backbone_specs, *head_specs], input_shape)
    layers = [
        build_layer(spec, shapes[i], rng, dtype=dtype, init=init)
        for i, spec in enumerate([*backbone_specs, *head_specs])
    ]
    n = len(backbone_specs)
    return ModelGraph(
        backbone=layers[:n],
        head=layers[n:],
        input_shape=tuple(input_shape),
        backbone_trainable=backbone_trainable,
        dtype=np.dtype(dtype),
    )


def modified_vgg16(
    input_shape: tuple[int, int, int] = DEFAULT_INPUT_SHAPE,
    seed: int = 0,
    dtype=np.float32,
    init: bool = True,
) -> ModelGraph:
    """The full-size configuration: 13-conv backbone plus the two-class head.

    At the default 224x224x3 input the backbone emits 7x7x512 features.
    Backbone weights are random unless loaded from a checkpoint.
    """
    return build_model(
        vgg16_backbone_specs(), custom_head_specs(), input_shape, seed=seed,
        dtype=dtype, init=init,
    )


def scratch_model(
    size: int = 64,
    seed: int = 0,
    dtype=np.float32,
    backbone_trainable: bool = False,
    init: bool = True,
) -> ModelGraph:
    """Desk-scale configuration: small three-stage backbone plus the same head."""
    return build_model(
        scratch_backbone_specs(), custom_head_specs(), (size, size, 3), seed=seed,
        dtype=dtype, backbone_trainable=backbone_trainable, init=init,
    )


def last_separable_conv_index(model: ModelGraph) -> int:
    """Index (within ``model.layers``) of the last separable convolution."""
    layers = model.layers
    for idx in range(len(layers) - 1, -1, -1):
        if layers[idx].kind is LayerKind.SEPARABLE_CONV2D:
            return idx
    raise ParameterError("model has no separable convolution layer")
