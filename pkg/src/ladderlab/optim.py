"""SGD with momentum and weight decay.

Update rule per parameter:

    v <- momentum * v + grad + weight_decay * param
    param <- param - learning_rate * v
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError
from .tensor import Tensor


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float
    momentum: float = 0.0
    weight_decay: float = 0.0
    batch_size: int = 64
    epochs: int = 1

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ContractError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ContractError(f"momentum must be in [0,1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ContractError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be positive, got {self.batch_size}")
        if self.epochs < 0:
            raise ContractError(f"epochs must be non-negative, got {self.epochs}")


def sgd_step(params, grads, cfg: SgdConfig, velocity):
    """One in-place update over parallel lists of params/grads/velocities."""
    if not (len(params) == len(grads) == len(velocity)):
        raise DimensionError("sgd_step: params/grads/velocity length mismatch")
    lr = np.float32(cfg.learning_rate)
    mom = np.float32(cfg.momentum)
    wd = np.float32(cfg.weight_decay)
    for p, g, v in zip(params, grads, velocity):
        arr = p.data if isinstance(p, Tensor) else p
        if g.shape != arr.shape or v.shape != arr.shape:
            raise DimensionError(
                f"sgd_step: shapes param {arr.shape}, grad {g.shape}, velocity {v.shape}"
            )
        v *= mom
        v += g
        if wd != 0.0:
            v += wd * arr
        arr -= lr * v
    return params


def new_velocity(params):
    return [np.zeros_like(p.data if isinstance(p, Tensor) else p) for p in params]
