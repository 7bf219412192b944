"""
Network: a sequential classifier built from LayerSpecs, with explicit forward traces
and backprop into per-layer parameter gradients.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from entaug.exceptions import ConfigurationError
from entaug.model.layers import Layer, LayerKind, LayerSpec, Shape, build_layer

logger = logging.getLogger(__name__)

Gradients = List[Dict[str, np.ndarray]]
MLP_HIDDEN = 256


@dataclass
class ForwardTrace:
    network_id: int
    mode: str
    logits: np.ndarray                         # (n, k) float64
    penultimate: np.ndarray                    # (n, d) float64, input to the final FC
    activations: Optional[List[np.ndarray]]    # layer inputs + final output; train mode only


class Network:
    def __init__(self, specs: Sequence[LayerSpec], input_shape: Shape, seed: int = 0, dtype=np.float32):
        if not specs or specs[-1].kind != LayerKind.FULLY_CONNECTED:
            raise ConfigurationError("the last layer must be fully connected")
        self.specs = list(specs)
        self.input_shape = tuple(input_shape)
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.layers: List[Layer] = [build_layer(spec, rng, self.dtype) for spec in self.specs]
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        self.k = shape[0]
        if self.k < 2:
            raise ConfigurationError("the network must output k >= 2 logits")
        self.train_forwards = 0
        self.eval_forwards = 0

    def __repr__(self):
        return f"Network({' -> '.join(repr(layer) for layer in self.layers)})"

    def forward(self, x: np.ndarray, mode: str = "train") -> ForwardTrace:
        x = np.asarray(x)
        if x.shape[1:] != self.input_shape:
            raise ConfigurationError(f"input shape {x.shape[1:]} does not match network input {self.input_shape}")
        if mode not in ("train", "eval"):
            raise ConfigurationError(f"unknown forward mode '{mode}'")
        activations = [x.astype(self.dtype, copy=False)]
        for layer in self.layers:
            activations.append(layer.forward(activations[-1]))
        if mode == "train":
            self.train_forwards += 1
        else:
            self.eval_forwards += 1
        penultimate = activations[-2].reshape(x.shape[0], -1).astype(np.float64)
        return ForwardTrace(
            network_id=id(self),
            mode=mode,
            logits=activations[-1].astype(np.float64),
            penultimate=penultimate,
            activations=activations if mode == "train" else None,
        )

    def backward(self, trace: ForwardTrace, loss_grads: np.ndarray) -> Gradients:
        """Parameter gradients given d(loss)/d(logits) for every sample in the trace."""
        if trace.network_id != id(self) or trace.activations is None:
            raise ConfigurationError("trace was not produced by a train-mode forward of this network")
        if loss_grads.shape != trace.logits.shape:
            raise ConfigurationError(f"loss gradient shape {loss_grads.shape} != logits {trace.logits.shape}")
        acts = trace.activations
        g = np.asarray(loss_grads).astype(self.dtype)
        grads: Gradients = [{} for _ in self.layers]
        for i in range(len(self.layers) - 1, -1, -1):
            g, grads[i] = self.layers[i].backward(acts[i], acts[i + 1], g, need_input_grad=i > 0)
        return grads

    def parameters(self) -> List[Dict[str, np.ndarray]]:
        return [layer.params for layer in self.layers]

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {
            f"layer{i}.{name}": value.astype(np.float64)
            for i, params in enumerate(self.parameters())
            for name, value in params.items()
        }

    def load_state_arrays(self, arrays: Dict[str, np.ndarray]):
        for i, params in enumerate(self.parameters()):
            for name, value in params.items():
                key = f"layer{i}.{name}"
                if key not in arrays or arrays[key].shape != value.shape:
                    raise ConfigurationError(f"state entry '{key}' missing or mis-shaped")
                value[...] = arrays[key].astype(self.dtype)


def architecture_specs(arch: str, input_shape: Shape, k: int, hidden_dim: int = 128) -> List[LayerSpec]:
    h, w, c = input_shape
    if arch == "tiny-cnn":
        return [
            LayerSpec.conv3x3(c, 16), LayerSpec.relu(), LayerSpec.maxpool2(),
            LayerSpec.conv3x3(16, 32), LayerSpec.relu(), LayerSpec.maxpool2(),
            LayerSpec.flatten(),
            LayerSpec.fc(32 * (h // 4) * (w // 4), hidden_dim), LayerSpec.relu(),
            LayerSpec.fc(hidden_dim, k),
        ]
    if arch == "mlp":
        return [
            LayerSpec.flatten(),
            LayerSpec.fc(h * w * c, MLP_HIDDEN), LayerSpec.relu(),
            LayerSpec.fc(MLP_HIDDEN, k),
        ]
    raise ConfigurationError(f"unknown architecture '{arch}'")


def build_network(arch: str, input_shape: Shape, k: int, hidden_dim: int = 128, seed: int = 0,
                  dtype=np.float32) -> Network:
    net = Network(architecture_specs(arch, input_shape, k, hidden_dim), input_shape, seed, dtype)
    logger.debug(f"Built {arch}: {net}")
    return net
