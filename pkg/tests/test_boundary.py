"""Attention-SVM contracts: attention weights, margins, training oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ladderlab.boundary import (
    AttentionLayer,
    AttentionSvm,
    SvmConfig,
    attention_forward,
    svm_margin,
    train_attention_svm,
)
from ladderlab.errors import CollapseError, ContractError, DegeneracyError, DimensionError
from ladderlab.optim import SgdConfig


def _separable_latents(n_per_class=100, dim=2, gap=10.0, seed=0):
    rng = np.random.default_rng(seed)
    neg = rng.normal(-gap / 2, 1.0, size=(n_per_class, dim))
    pos = rng.normal(+gap / 2, 1.0, size=(n_per_class, dim))
    Z = np.concatenate([neg, pos]).astype(np.float32)
    y = np.concatenate([-np.ones(n_per_class), np.ones(n_per_class)]).astype(np.float32)
    return Z, y


def _uniform_svm(w, b, F=2, pair=(0, 1)):
    att = AttentionLayer(3)  # zero kernel => uniform beta
    return AttentionSvm(att, np.asarray(w, dtype=np.float32), b, pair)


def test_zero_kernel_gives_uniform_beta():
    att = AttentionLayer(3)
    z = np.random.default_rng(0).normal(size=(4, 10)).astype(np.float32)
    beta = attention_forward(att, z)
    assert np.allclose(beta, 0.1, atol=1e-6)


def test_uniform_beta_weighting_example():
    # F=2, z=(1,-1), uniform beta: attended vector is (0.5, -0.5)
    att = AttentionLayer(3)
    z = np.array([1.0, -1.0], dtype=np.float32)
    beta = attention_forward(att, z)
    assert np.allclose(beta * z, [0.5, -0.5], atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=32))
def test_beta_is_distribution(values):
    att = AttentionLayer(3)
    beta = attention_forward(att, np.asarray(values, dtype=np.float32))
    assert abs(beta.sum() - 1.0) < 1e-5
    assert np.all(beta > 0.0)


def test_trained_beta_stays_distribution():
    Z, y = _separable_latents(seed=5)
    svm = train_attention_svm(Z, y, SvmConfig(), seed=6)
    beta = svm.beta(Z)
    assert np.allclose(beta.sum(axis=1), 1.0, atol=1e-5)
    assert np.all(beta > 0.0)


def test_separable_training_accuracy():
    Z, y = _separable_latents(seed=1)
    svm = train_attention_svm(Z, y, SvmConfig(), seed=2, class_pair=(0, 1))
    acc = float(np.mean(np.sign(svm.margin(Z)) == y))
    assert acc >= 0.99
    assert np.isclose(np.linalg.norm(svm.d), 1.0, atol=1e-6)
    assert np.allclose(svm.d, svm.w / np.linalg.norm(svm.w), atol=1e-6)


def test_label_flip_negates_direction():
    Z, y = _separable_latents(seed=3)
    svm_a = train_attention_svm(Z, y, SvmConfig(), seed=4)
    svm_b = train_attention_svm(Z, -y, SvmConfig(), seed=4)
    assert float(svm_a.d @ svm_b.d) == pytest.approx(-1.0, abs=0.05)


def test_single_class_rejected():
    Z = np.random.default_rng(0).normal(size=(10, 2)).astype(np.float32)
    with pytest.raises(DegeneracyError):
        train_attention_svm(Z, np.ones(10, dtype=np.float32), SvmConfig(), seed=0)


def test_collapse_detected():
    with pytest.raises(CollapseError):
        AttentionSvm(AttentionLayer(3), np.zeros(2, dtype=np.float32), 0.0, (0, 1))


def test_margin_arithmetic_example():
    # w=(1,0), b=0, uniform beta=(0.5,0.5), z=(-2,0): g = -1
    svm = _uniform_svm([1.0, 0.0], 0.0)
    assert svm_margin(svm, np.array([-2.0, 0.0], dtype=np.float32)) == pytest.approx(-1.0, abs=1e-6)


def test_margin_zero_on_constructed_hyperplane_point():
    svm = _uniform_svm([1.0, 0.0], -0.25)
    # uniform beta=0.5: g = 0.5*z0 - 0.25 = 0 at z0 = 0.5
    assert svm_margin(svm, np.array([0.5, 0.0], dtype=np.float32)) == pytest.approx(0.0, abs=1e-5)


def test_positive_margin_on_positive_class():
    Z, y = _separable_latents(seed=7)
    svm = train_attention_svm(Z, y, SvmConfig(), seed=8)
    margins = svm.margin(Z[y > 0])
    assert np.all(margins > 0)


def test_margin_dimension_error():
    svm = _uniform_svm([1.0, 0.0], 0.0)
    with pytest.raises(DimensionError):
        svm.margin(np.zeros(3, dtype=np.float32))


def test_class_pair_scope_is_enforced():
    svm = _uniform_svm([1.0, 0.0], 0.0, pair=(3, 7))
    assert svm.label_sign(3) == -1.0
    assert svm.label_sign(7) == +1.0
    with pytest.raises(ContractError):
        svm.label_sign(5)
    with pytest.raises(ContractError):
        svm.oriented_for_target(5)


def test_orientation_flip_negates_margin():
    Z, y = _separable_latents(seed=9)
    svm = train_attention_svm(Z, y, SvmConfig(), seed=10, class_pair=(0, 1))
    flipped = svm.oriented_for_target(0)
    z = Z[:5]
    assert np.allclose(flipped.margin(z), -svm.margin(z), atol=1e-5)
    assert np.allclose(flipped.d, -svm.d, atol=1e-6)
    assert flipped.class_pair == (1, 0)


def test_svm_checkpoint_round_trip(tmp_path):
    Z, y = _separable_latents(seed=11)
    svm = train_attention_svm(Z, y, SvmConfig(), seed=12, class_pair=(2, 5))
    path = tmp_path / "svm.ckpt"
    svm.save(path)
    loaded = AttentionSvm.load(path)
    assert loaded.class_pair == (2, 5)
    assert np.array_equal(loaded.w, svm.w)
    assert np.allclose(loaded.margin(Z[:8]), svm.margin(Z[:8]), atol=1e-6)


def test_default_budget_is_400():
    assert SvmConfig().budget == 400
