"""
Layers with explicit forward/backward passes over NHWC batches.

Layers hold parameters only; activations live in the network's ForwardTrace and
are handed back to `backward`, so a layer object can serve any number of passes.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from entaug.exceptions import ConfigurationError

Shape = Tuple[int, ...]
ParamGrads = Dict[str, np.ndarray]


class LayerKind(str, Enum):
    CONV3X3 = "conv3x3"
    MAXPOOL2 = "maxpool2"
    RELU = "relu"
    FLATTEN = "flatten"
    FULLY_CONNECTED = "fc"


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    in_dim: int = 0
    out_dim: int = 0

    @classmethod
    def conv3x3(cls, in_ch: int, out_ch: int) -> "LayerSpec":
        return cls(LayerKind.CONV3X3, in_ch, out_ch)

    @classmethod
    def maxpool2(cls) -> "LayerSpec":
        return cls(LayerKind.MAXPOOL2)

    @classmethod
    def relu(cls) -> "LayerSpec":
        return cls(LayerKind.RELU)

    @classmethod
    def flatten(cls) -> "LayerSpec":
        return cls(LayerKind.FLATTEN)

    @classmethod
    def fc(cls, in_dim: int, out_dim: int) -> "LayerSpec":
        return cls(LayerKind.FULLY_CONNECTED, in_dim, out_dim)


class Layer:
    """Base layer: identity shape, no parameters."""

    def __init__(self, spec: LayerSpec):
        self.spec = spec
        self.params: Dict[str, np.ndarray] = {}

    def output_shape(self, input_shape: Shape) -> Shape:
        return input_shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, x: np.ndarray, out: np.ndarray, grad_out: np.ndarray,
                 need_input_grad: bool = True) -> Tuple[Optional[np.ndarray], ParamGrads]:
        raise NotImplementedError

    def __repr__(self):
        dims = f"({self.spec.in_dim}, {self.spec.out_dim})" if self.params else ""
        return f"{self.spec.kind.value}{dims}"


def he_normal(rng: np.random.Generator, fan_in: int, shape: Shape, dtype) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Conv3x3(Layer):
    """3x3 convolution, stride 1, zero padding 1 (spatial size preserved)."""

    def __init__(self, spec: LayerSpec, rng: np.random.Generator, dtype=np.float32):
        super().__init__(spec)
        fan_in = 9 * spec.in_dim
        # rows ordered (channel, dy, dx) to match the sliding-window columns
        self.params["W"] = he_normal(rng, fan_in, (fan_in, spec.out_dim), dtype)
        self.params["b"] = np.zeros(spec.out_dim, dtype=dtype)

    def output_shape(self, input_shape: Shape) -> Shape:
        if len(input_shape) != 3 or input_shape[2] != self.spec.in_dim:
            raise ConfigurationError(f"conv3x3 expects (H, W, {self.spec.in_dim}), got {input_shape}")
        return (input_shape[0], input_shape[1], self.spec.out_dim)

    @staticmethod
    def _columns(x: np.ndarray) -> np.ndarray:
        n, h, w, c = x.shape
        padded = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        return sliding_window_view(padded, (3, 3), axis=(1, 2)).reshape(n * h * w, c * 9)

    def forward(self, x):
        n, h, w, _ = x.shape
        out = self._columns(x) @ self.params["W"] + self.params["b"]
        return out.reshape(n, h, w, self.spec.out_dim)

    def backward(self, x, out, grad_out, need_input_grad=True):
        n, h, w, c = x.shape
        g = grad_out.reshape(-1, self.spec.out_dim)
        grads = {"W": self._columns(x).T @ g, "b": g.sum(axis=0)}
        if not need_input_grad:
            return None, grads
        dcols = (g @ self.params["W"].T).reshape(n, h, w, c, 3, 3)
        dpad = np.zeros((n, h + 2, w + 2, c), dtype=grad_out.dtype)
        for dy in range(3):
            for dx in range(3):
                dpad[:, dy:dy + h, dx:dx + w, :] += dcols[..., dy, dx]
        return dpad[:, 1:-1, 1:-1, :], grads


class MaxPool2(Layer):
    """2x2 max pooling, stride 2; a trailing odd row/column is dropped."""

    def output_shape(self, input_shape: Shape) -> Shape:
        if len(input_shape) != 3 or input_shape[0] < 2 or input_shape[1] < 2:
            raise ConfigurationError(f"maxpool2 expects (H>=2, W>=2, C), got {input_shape}")
        return (input_shape[0] // 2, input_shape[1] // 2, input_shape[2])

    @staticmethod
    def _windows(x: np.ndarray) -> np.ndarray:
        n, h, w, c = x.shape
        h2, w2 = h // 2, w // 2
        blocks = x[:, :2 * h2, :2 * w2].reshape(n, h2, 2, w2, 2, c)
        return blocks.transpose(0, 1, 3, 5, 2, 4).reshape(n, h2, w2, c, 4)

    def forward(self, x):
        return self._windows(x).max(axis=-1)

    def backward(self, x, out, grad_out, need_input_grad=True):
        if not need_input_grad:
            return None, {}
        n, h, w, c = x.shape
        h2, w2 = h // 2, w // 2
        windows = self._windows(x)
        # the first maximal element of each window receives the gradient
        winner = windows.argmax(axis=-1)[..., None]
        routed = np.zeros_like(windows)
        np.put_along_axis(routed, winner, grad_out[..., None], axis=-1)
        routed = routed.reshape(n, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, 2 * h2, 2 * w2, c)
        dx = np.zeros_like(x)
        dx[:, :2 * h2, :2 * w2] = routed
        return dx, {}


class ReLU(Layer):
    def forward(self, x):
        return np.maximum(x, 0)

    def backward(self, x, out, grad_out, need_input_grad=True):
        return (grad_out * (x > 0) if need_input_grad else None), {}


class Flatten(Layer):
    def output_shape(self, input_shape: Shape) -> Shape:
        return (int(np.prod(input_shape)),)

    def forward(self, x):
        return x.reshape(x.shape[0], -1)

    def backward(self, x, out, grad_out, need_input_grad=True):
        return (grad_out.reshape(x.shape) if need_input_grad else None), {}


class FullyConnected(Layer):
    def __init__(self, spec: LayerSpec, rng: np.random.Generator, dtype=np.float32):
        super().__init__(spec)
        self.params["W"] = he_normal(rng, spec.in_dim, (spec.in_dim, spec.out_dim), dtype)
        self.params["b"] = np.zeros(spec.out_dim, dtype=dtype)

    def output_shape(self, input_shape: Shape) -> Shape:
        if input_shape != (self.spec.in_dim,):
            raise ConfigurationError(f"fc expects ({self.spec.in_dim},), got {input_shape}")
        return (self.spec.out_dim,)

    def forward(self, x):
        return x @ self.params["W"] + self.params["b"]

    def backward(self, x, out, grad_out, need_input_grad=True):
        grads = {"W": x.T @ grad_out, "b": grad_out.sum(axis=0)}
        return (grad_out @ self.params["W"].T if need_input_grad else None), grads


def build_layer(spec: LayerSpec, rng: np.random.Generator, dtype=np.float32) -> Layer:
    if spec.kind == LayerKind.CONV3X3:
        return Conv3x3(spec, rng, dtype)
    if spec.kind == LayerKind.FULLY_CONNECTED:
        return FullyConnected(spec, rng, dtype)
    simple = {LayerKind.MAXPOOL2: MaxPool2, LayerKind.RELU: ReLU, LayerKind.FLATTEN: Flatten}
    return simple[spec.kind](spec)
