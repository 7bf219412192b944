"""
SGD with momentum (optionally Nesterov), coupled weight decay and
cosine / multi-step learning-rate schedules.
"""
import math
from bisect import bisect_right
from typing import Dict, List

import numpy as np

from entaug.config import OptimizerConfig, Schedule
from entaug.exceptions import ConfigurationError
from entaug.model.network import Gradients, Network


def learning_rate(opt: OptimizerConfig, epoch: int) -> float:
    if opt.schedule == Schedule.MULTISTEP:
        return opt.lr0 * opt.gamma ** bisect_right(opt.milestones, epoch)
    total = opt.total_epochs or 1
    return 0.5 * opt.lr0 * (1.0 + math.cos(math.pi * epoch / total))


class SGD:
    """Owns the velocity buffers for one network; mutated between batches only."""

    def __init__(self, net: Network, opt: OptimizerConfig):
        self.net = net
        self.opt = opt
        self.velocity: List[Dict[str, np.ndarray]] = [
            {name: np.zeros_like(value) for name, value in params.items()} for params in net.parameters()
        ]

    def step(self, grads: Gradients, epoch: int) -> float:
        """v <- mu v + g + wd w ; w <- w - lr v  (Nesterov: w <- w - lr (g + wd w + mu v))."""
        params = self.net.parameters()
        if len(grads) != len(params):
            raise ConfigurationError("gradients do not match the network's layers")
        lr = learning_rate(self.opt, epoch)
        mu, wd = self.opt.momentum, self.opt.weight_decay
        for layer_params, layer_grads, layer_velocity in zip(params, grads, self.velocity):
            for name, w in layer_params.items():
                g = layer_grads[name].astype(w.dtype, copy=False)
                if g.shape != w.shape:
                    raise ConfigurationError(f"gradient for '{name}' has shape {g.shape}, expected {w.shape}")
                d = g + wd * w
                v = layer_velocity[name]
                v *= mu
                v += d
                w -= lr * (d + mu * v if self.opt.nesterov else v)
        return lr

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {
            f"velocity.layer{i}.{name}": value.astype(np.float64)
            for i, layer_velocity in enumerate(self.velocity)
            for name, value in layer_velocity.items()
        }

    def load_state_arrays(self, arrays: Dict[str, np.ndarray]):
        for i, layer_velocity in enumerate(self.velocity):
            for name, value in layer_velocity.items():
                key = f"velocity.layer{i}.{name}"
                if key not in arrays:
                    raise ConfigurationError(f"optimizer state entry '{key}' missing")
                value[...] = arrays[key].astype(value.dtype)


def sgd_step(optimizer: SGD, grads: Gradients, epoch: int) -> float:
    return optimizer.step(grads, epoch)
