"""SGD update-rule contracts."""

import numpy as np
import pytest

from ladderlab.errors import ContractError, DimensionError
from ladderlab.optim import SgdConfig, new_velocity, sgd_step
from ladderlab.tensor import Tensor


def test_single_step_example():
    # lr=0.01, momentum=0.5, decay=0: param 1.0 with grad 1.0 -> 0.99
    p = Tensor([1.0])
    v = new_velocity([p])
    sgd_step([p], [np.ones(1, dtype=np.float32)], SgdConfig(0.01, momentum=0.5), v)
    assert p.data[0] == pytest.approx(0.99)


def test_zero_grad_is_noop():
    p = Tensor([3.0])
    v = new_velocity([p])
    sgd_step([p], [np.zeros(1, dtype=np.float32)], SgdConfig(0.1), v)
    assert p.data[0] == 3.0


def test_momentum_two_step_recurrence():
    # momentum=0.5, lr=1, unit grads: deltas 1 then 1.5
    p = Tensor([0.0])
    v = new_velocity([p])
    cfg = SgdConfig(1.0, momentum=0.5)
    g = np.ones(1, dtype=np.float32)
    sgd_step([p], [g], cfg, v)
    assert p.data[0] == pytest.approx(-1.0)
    sgd_step([p], [g], cfg, v)
    assert p.data[0] == pytest.approx(-2.5)


def test_weight_decay_enters_velocity():
    p = Tensor([2.0])
    v = new_velocity([p])
    sgd_step([p], [np.zeros(1, dtype=np.float32)], SgdConfig(0.5, weight_decay=0.1), v)
    # v = 0.1 * 2.0 = 0.2; param = 2.0 - 0.5 * 0.2
    assert p.data[0] == pytest.approx(1.9)


def test_shape_mismatch_rejected():
    p = Tensor([1.0, 2.0])
    with pytest.raises(DimensionError):
        sgd_step([p], [np.zeros(3, dtype=np.float32)], SgdConfig(0.1), new_velocity([p]))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"learning_rate": 0.0},
        {"learning_rate": -1.0},
        {"learning_rate": 0.1, "momentum": 1.0},
        {"learning_rate": 0.1, "momentum": -0.1},
        {"learning_rate": 0.1, "weight_decay": -1e-3},
        {"learning_rate": 0.1, "batch_size": 0},
        {"learning_rate": 0.1, "epochs": -1},
    ],
)
def test_config_invariants(kwargs):
    with pytest.raises(ContractError):
        SgdConfig(**kwargs)


def test_zero_epochs_allowed():
    assert SgdConfig(0.1, epochs=0).epochs == 0
