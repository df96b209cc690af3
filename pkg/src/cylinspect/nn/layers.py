"""Layer implementations with hand-derived backward passes.

Tensors are batched channels-last arrays ``(N, H, W, C)`` or ``(N, F)``.
Each layer exposes ``forward(x, mode, rng) -> (y, cache)`` and
``backward(dy, cache, need_dx) -> (dx, grads)`` where ``grads`` maps the
layer's parameter names to arrays of matching shape. Caches are plain
tuples of whatever the backward pass needs; they are produced by one
forward call and consumed by at most one backward call.

Convolutions are stride-1 and evaluated through an im2col patch view so
the inner loops are BLAS matrix products.
"""

from __future__ import annotations

from enum import Enum, auto

import numpy as np

from ..errors import ParameterError, ShapeError
from .specs import (
    NONE,
    RELU,
    SAME,
    LayerKind,
    LayerSpec,
    out_shape,
)


class Mode(Enum):
    TRAIN = auto()
    INFER = auto()


def _pad_amounts(k: int, padding: str) -> tuple[int, int]:
    if padding == SAME:
        before = (k - 1) // 2
        return before, k - 1 - before
    return 0, 0


def _extract_patches(x: np.ndarray, k: int, padding: str) -> np.ndarray:
    """(N, H, W, C) -> read-only view (N, Ho, Wo, k, k, C) of sliding windows."""
    pb, pa = _pad_amounts(k, padding)
    if pb or pa:
        x = np.pad(x, ((0, 0), (pb, pa), (pb, pa), (0, 0)))
    n, h, w, c = x.shape
    if h < k or w < k:
        raise ShapeError(f"kernel {k} larger than padded input {h}x{w}")
    ho, wo = h - k + 1, w - k + 1
    s = x.strides
    shape = (n, ho, wo, k, k, c)
    strides = (s[0], s[1], s[2], s[1], s[2], s[3])
    return np.lib.stride_tricks.as_strided(x, shape, strides, writeable=False)


def _scatter_patches_add(
    grad_rows: np.ndarray, kernel_hw: int, in_hw: tuple[int, int], padding: str
) -> np.ndarray:
    """Accumulate per-window gradients back onto the (padded) input grid.

    ``grad_rows`` has shape (N, Ho, Wo, k, k, C): the contribution of every
    window position to each input pixel it covered.
    """
    n, ho, wo, k, _, c = grad_rows.shape
    pb, pa = _pad_amounts(kernel_hw, padding)
    h, w = in_hw[0] + pb + pa, in_hw[1] + pb + pa
    dx = np.zeros((n, h, w, c), dtype=grad_rows.dtype)
    for i in range(k):
        for j in range(k):
            dx[:, i : i + ho, j : j + wo, :] += grad_rows[:, :, :, i, j, :]
    if pb or pa:
        dx = dx[:, pb : pb + in_hw[0], pb : pb + in_hw[1], :]
    return dx


class Layer:
    """Base class: spec, parameter dict, and the forward/backward pair."""

    def __init__(self, spec: LayerSpec, in_shape: tuple[int, ...]):
        self.spec = spec
        self.in_shape = tuple(in_shape)
        self.out_shape = out_shape(spec, in_shape)
        self.params: dict[str, np.ndarray] = {}

    @property
    def kind(self) -> LayerKind:
        return self.spec.kind

    def param_size(self) -> int:
        return sum(p.size for p in self.params.values())

    def forward(self, x: np.ndarray, mode: Mode, rng: np.random.Generator | None):
        raise NotImplementedError

    def backward(self, dy: np.ndarray, cache, need_dx: bool = True):
        raise NotImplementedError


def _relu_forward(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mask = z > 0
    return z * mask, mask


class Conv2D(Layer):
    """Stride-1 convolution with optional ReLU; params ``weights`` (k,k,C,F)
    and ``bias`` (F,)."""

    def forward(self, x, mode, rng):
        k, f = self.spec.kernel_size, self.spec.filters
        patches = _extract_patches(x, k, self.spec.padding)
        n, ho, wo = patches.shape[:3]
        cols = patches.reshape(n * ho * wo, -1)
        z = cols @ self.params["weights"].reshape(-1, f) + self.params["bias"]
        z = z.reshape(n, ho, wo, f)
        if self.spec.activation == RELU:
            y, mask = _relu_forward(z)
        else:
            y, mask = z, None
        return y, (cols, x.shape, mask)

    def backward(self, dy, cache, need_dx=True):
        cols, x_shape, mask = cache
        k, f = self.spec.kernel_size, self.spec.filters
        dz = dy * mask if mask is not None else dy
        dz_flat = dz.reshape(-1, f)
        grads = {
            "weights": (cols.T @ dz_flat).reshape(self.params["weights"].shape),
            "bias": dz_flat.sum(axis=0),
        }
        dx = None
        if need_dx:
            w_flat = self.params["weights"].reshape(-1, f)
            dcols = dz_flat @ w_flat.T
            n, ho, wo = dz.shape[:3]
            grad_rows = dcols.reshape(n, ho, wo, k, k, x_shape[3])
            dx = _scatter_patches_add(grad_rows, k, x_shape[1:3], self.spec.padding)
        return dx, grads


class SeparableConv2D(Layer):
    """Depthwise k x k convolution per channel followed by 1x1 pointwise
    mixing; params ``depthwise`` (k,k,C), ``pointwise`` (C,F), ``bias`` (F,).
    The single bias sits after the pointwise stage."""

    def forward(self, x, mode, rng):
        k = self.spec.kernel_size
        patches = _extract_patches(x, k, self.spec.padding)
        mid = np.einsum("nhwijc,ijc->nhwc", patches, self.params["depthwise"], optimize=True)
        z = mid @ self.params["pointwise"] + self.params["bias"]
        if self.spec.activation == RELU:
            y, mask = _relu_forward(z)
        else:
            y, mask = z, None
        # Keep the padded source array alive through the strided view.
        return y, (patches, mid, x.shape, mask)

    def backward(self, dy, cache, need_dx=True):
        patches, mid, x_shape, mask = cache
        k = self.spec.kernel_size
        c = x_shape[3]
        dz = dy * mask if mask is not None else dy
        f = dz.shape[-1]
        dz_flat = dz.reshape(-1, f)
        grads = {
            "pointwise": mid.reshape(-1, c).T @ dz_flat,
            "bias": dz_flat.sum(axis=0),
        }
        dmid = dz @ self.params["pointwise"].T
        grads["depthwise"] = np.einsum("nhwijc,nhwc->ijc", patches, dmid, optimize=True)
        dx = None
        if need_dx:
            # Each window contributes dmid * depthwise weight at its offsets.
            grad_rows = dmid[:, :, :, None, None, :] * self.params["depthwise"][None, None, None]
            dx = _scatter_patches_add(grad_rows, k, x_shape[1:3], self.spec.padding)
        return dx, grads


class AvgPool2D(Layer):
    """Non-overlapping window means; trailing rows/cols that do not fill a
    window are dropped (floor semantics) and receive zero gradient."""

    def forward(self, x, mode, rng):
        p = self.spec.pool_size
        n, h, w, c = x.shape
        ho, wo = h // p, w // p
        if ho < 1 or wo < 1:
            raise ShapeError(f"pool size {p} larger than input {h}x{w}")
        windows = x[:, : ho * p, : wo * p, :].reshape(n, ho, p, wo, p, c)
        y = windows.mean(axis=(2, 4))
        return y, (x.shape,)

    def backward(self, dy, cache, need_dx=True):
        (x_shape,) = cache
        if not need_dx:
            return None, {}
        p = self.spec.pool_size
        n, h, w, c = x_shape
        ho, wo = h // p, w // p
        dx = np.zeros(x_shape, dtype=dy.dtype)
        spread = np.broadcast_to(
            dy[:, :, None, :, None, :] / (p * p), (n, ho, p, wo, p, c)
        )
        dx[:, : ho * p, : wo * p, :] = spread.reshape(n, ho * p, wo * p, c)
        return dx, {}


class MaxPool2D(Layer):
    """Non-overlapping window maxima with floor semantics; gradient routes
    to the first maximal element of each window."""

    def forward(self, x, mode, rng):
        p = self.spec.pool_size
        n, h, w, c = x.shape
        ho, wo = h // p, w // p
        if ho < 1 or wo < 1:
            raise ShapeError(f"pool size {p} larger than input {h}x{w}")
        windows = (
            x[:, : ho * p, : wo * p, :]
            .reshape(n, ho, p, wo, p, c)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(n, ho, wo, c, p * p)
        )
        idx = windows.argmax(axis=-1)
        y = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
        return y, (x.shape, idx)

    def backward(self, dy, cache, need_dx=True):
        x_shape, idx = cache
        if not need_dx:
            return None, {}
        p = self.spec.pool_size
        n, h, w, c = x_shape
        ho, wo = h // p, w // p
        flat = np.zeros((n, ho, wo, c, p * p), dtype=dy.dtype)
        np.put_along_axis(flat, idx[..., None], dy[..., None], axis=-1)
        dx = np.zeros(x_shape, dtype=dy.dtype)
        dx[:, : ho * p, : wo * p, :] = (
            flat.reshape(n, ho, wo, c, p, p)
            .transpose(0, 1, 4, 2, 5, 3)
            .reshape(n, ho * p, wo * p, c)
        )
        return dx, {}


class Flatten(Layer):
    def forward(self, x, mode, rng):
        return x.reshape(x.shape[0], -1), (x.shape,)

    def backward(self, dy, cache, need_dx=True):
        (x_shape,) = cache
        return (dy.reshape(x_shape) if need_dx else None), {}


class Dense(Layer):
    """Affine map with optional ReLU; params ``weights`` (units, in) and
    ``bias`` (units,)."""

    def forward(self, x, mode, rng):
        if x.ndim != 2 or x.shape[1] != self.in_shape[0]:
            raise ShapeError(
                f"dense layer expects (N, {self.in_shape[0]}) input, got {x.shape}"
            )
        z = x @ self.params["weights"].T + self.params["bias"]
        if self.spec.activation == RELU:
            y, mask = _relu_forward(z)
        else:
            y, mask = z, None
        return y, (x, mask)

    def backward(self, dy, cache, need_dx=True):
        x, mask = cache
        dz = dy * mask if mask is not None else dy
        grads = {"weights": dz.T @ x, "bias": dz.sum(axis=0)}
        dx = dz @ self.params["weights"] if need_dx else None
        return dx, grads


class Dropout(Layer):
    """Inverted dropout: units are zeroed with probability ``rate`` during
    training and survivors are scaled by 1/(1-rate); inference is the
    identity."""

    def forward(self, x, mode, rng):
        rate = self.spec.rate
        if mode is Mode.INFER or rate == 0.0:
            return x, (None,)
        if rng is None:
            raise ParameterError("dropout in TRAIN mode needs a random generator")
        keep = (rng.random(x.shape) >= rate).astype(x.dtype)
        scale = 1.0 / (1.0 - rate)
        return x * keep * scale, (keep * scale,)

    def backward(self, dy, cache, need_dx=True):
        (scaled_mask,) = cache
        if not need_dx:
            return None, {}
        return (dy if scaled_mask is None else dy * scaled_mask), {}


class Softmax(Layer):
    """Row-wise softmax with max-subtraction for overflow safety."""

    def forward(self, x, mode, rng):
        shifted = x - x.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        p = e / e.sum(axis=-1, keepdims=True)
        return p, (p,)

    def backward(self, dy, cache, need_dx=True):
        (p,) = cache
        if not need_dx:
            return None, {}
        inner = (dy * p).sum(axis=-1, keepdims=True)
        return p * (dy - inner), {}


_LAYER_CLASSES = {
    LayerKind.CONV2D: Conv2D,
    LayerKind.SEPARABLE_CONV2D: SeparableConv2D,
    LayerKind.AVG_POOL2D: AvgPool2D,
    LayerKind.MAX_POOL2D: MaxPool2D,
    LayerKind.FLATTEN: Flatten,
    LayerKind.DENSE: Dense,
    LayerKind.DROPOUT: Dropout,
    LayerKind.SOFTMAX: Softmax,
}


def _uniform_limit(spec: LayerSpec, fan_in: int, fan_out: int) -> float:
    # He for ReLU layers, Glorot otherwise (including the pre-softmax dense).
    if spec.activation == RELU:
        return float(np.sqrt(6.0 / fan_in))
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def build_layer(
    spec: LayerSpec,
    in_shape: tuple[int, ...],
    rng: np.random.Generator | None,
    dtype=np.float32,
    init: bool = True,
) -> Layer:
    """Materialize a layer, drawing initial weights from ``rng``.

    With ``init=False`` parameters are allocated as zeros (used when a
    checkpoint will overwrite them). Biases always start at zero.
    """
    layer = _LAYER_CLASSES[spec.kind](spec, in_shape)

    def draw(shape, fan_in, fan_out):
        if not init:
            return np.zeros(shape, dtype=dtype)
        if rng is None:
            raise ParameterError("weight initialization needs a random generator")
        limit = _uniform_limit(spec, fan_in, fan_out)
        return rng.uniform(-limit, limit, size=shape).astype(dtype)

    if spec.kind is LayerKind.CONV2D:
        k, c, f = spec.kernel_size, in_shape[2], spec.filters
        layer.params["weights"] = draw((k, k, c, f), k * k * c, k * k * f)
        layer.params["bias"] = np.zeros(f, dtype=dtype)
    elif spec.kind is LayerKind.SEPARABLE_CONV2D:
        k, c, f = spec.kernel_size, in_shape[2], spec.filters
        layer.params["depthwise"] = draw((k, k, c), k * k, k * k)
        layer.params["pointwise"] = draw((c, f), c, f)
        layer.params["bias"] = np.zeros(f, dtype=dtype)
    elif spec.kind is LayerKind.DENSE:
        fan_in, units = in_shape[0], spec.units
        layer.params["weights"] = draw((units, fan_in), fan_in, units)
        layer.params["bias"] = np.zeros(units, dtype=dtype)
    return layer
