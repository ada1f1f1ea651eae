"""Input-space baseline attacks: FGSM, PGD, and single-feature greedy JSMA.

All attacks are pure functions of (model, input) — PGD starts from the
clean input unless random_start is set — and their outputs always satisfy
the L-infinity budget and [0,1] clipping exactly.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import ops, rng
from .data import Dataset
from .errors import ContractError
from .tensor import Tape, Tensor, backward

logger = logging.getLogger("ladderlab.attacks")


@dataclass(frozen=True)
class AttackConfig:
    kind: str
    epsilon: float = 0.3
    step: float = 0.1
    iters: int = 10
    theta: float = 1.0
    max_fraction: float = 0.14
    targeted: bool = False
    random_start: bool = False

    def __post_init__(self):
        if self.kind not in ("fgsm", "pgd", "jsma"):
            raise ContractError(f"unknown attack kind {self.kind!r}")
        if self.kind in ("fgsm", "pgd") and not self.epsilon > 0:
            raise ContractError(f"epsilon must be positive, got {self.epsilon}")
        if self.kind == "pgd" and not 0 < self.step <= self.epsilon:
            raise ContractError(f"need 0 < step <= epsilon, got step={self.step}")
        if self.kind == "pgd" and self.iters < 1:
            raise ContractError(f"iters must be positive, got {self.iters}")
        if self.kind == "jsma" and not 0 < self.max_fraction <= 1:
            raise ContractError(f"need 0 < max_fraction <= 1, got {self.max_fraction}")
        if self.kind == "jsma" and not self.theta > 0:
            raise ContractError(f"theta must be positive, got {self.theta}")


def _batched(x):
    x = np.asarray(x, dtype=np.float32)
    return (x[None, ...], True) if x.ndim == 1 or x.ndim == 3 else (x, False)


def _ce_input_grad(classifier, x_np, y_np):
    """d(mean CE)/dx; the 1/N factor never changes per-sample gradient signs."""
    with Tape() as tape:
        xt = Tensor(x_np)
        xt.requires_grad = True
        tape.watch(xt)
        logits, _ = classifier.forward(xt)
        loss = ops.cross_entropy_logits(logits, y_np)
    backward(tape, loss)
    return xt.grad


def fgsm(classifier, x, y, epsilon):
    """x' = clip01(x + eps * sign(d CE / dx))."""
    xb, squeeze = _batched(x)
    yb = np.atleast_1d(np.asarray(y, dtype=np.int64))
    grad = _ce_input_grad(classifier, xb, yb)
    if not np.any(grad):
        logger.warning("fgsm: zero gradient everywhere, returning input unchanged")
    out = np.clip(xb + np.float32(epsilon) * np.sign(grad), 0.0, 1.0).astype(np.float32)
    return out[0] if squeeze else out


def pgd(classifier, x, y, cfg: AttackConfig, seed=0):
    """Iterated FGSM with projection onto the eps-ball around x and [0,1]."""
    if cfg.kind != "pgd":
        raise ContractError(f"pgd called with config kind {cfg.kind!r}")
    x0, squeeze = _batched(x)
    yb = np.atleast_1d(np.asarray(y, dtype=np.int64))
    eps = np.float32(cfg.epsilon)
    lo = np.clip(x0 - eps, 0.0, 1.0)
    hi = np.clip(x0 + eps, 0.0, 1.0)
    xt = x0.copy()
    if cfg.random_start:
        stream = rng.named_stream(seed, "attack.pgd.start")
        xt = np.clip(
            xt + stream.uniform(-cfg.epsilon, cfg.epsilon, size=xt.shape).astype(np.float32),
            lo,
            hi,
        )
    for _ in range(cfg.iters):
        grad = _ce_input_grad(classifier, xt, yb)
        xt = np.clip(xt + np.float32(cfg.step) * np.sign(grad), lo, hi).astype(np.float32)
    return xt[0] if squeeze else xt


class JsmaResult(NamedTuple):
    x_adv: np.ndarray
    success: bool
    n_modified: int


def _softmax_jacobian(classifier, x_np):
    """d softmax(f(x))_c / dx for every class c, via one pass per class."""
    C = classifier.class_count
    rows = []
    for c in range(C):
        onehot = np.zeros((1, C), dtype=np.float32)
        onehot[0, c] = 1.0
        with Tape() as tape:
            xt = Tensor(x_np[None, ...])
            xt.requires_grad = True
            tape.watch(xt)
            logits, _ = classifier.forward(xt)
            probs = ops.softmax(logits, axis=1)
            picked = ops.sumall(ops.mul(probs, Tensor(onehot)))
        backward(tape, picked)
        rows.append(xt.grad[0].reshape(-1).copy())
    return np.stack(rows)


def jsma(classifier, x, target, cfg: AttackConfig):
    """Greedy single-feature saliency attack toward `target`.

    Saliency of feature i is zero when the target derivative is negative or
    the summed other-class derivative is positive; otherwise it is their
    signed product. The top-saliency untouched feature is bumped by theta
    (clipped to [0,1]) until success or the feature budget runs out.
    """
    if cfg.kind != "jsma":
        raise ContractError(f"jsma called with config kind {cfg.kind!r}")
    x_adv = np.asarray(x, dtype=np.float32).copy()
    dim = x_adv.size
    max_changes = int(cfg.max_fraction * dim)
    touched = np.zeros(dim, dtype=bool)
    n_modified = 0

    while True:
        pred = int(classifier.predict(x_adv[None, ...])[0])
        if pred == target:
            return JsmaResult(x_adv, True, n_modified)
        if n_modified >= max_changes:
            return JsmaResult(x_adv, False, n_modified)
        jac = _softmax_jacobian(classifier, x_adv)
        d_target = jac[target]
        d_others = jac.sum(axis=0) - d_target
        saliency = np.where((d_target < 0) | (d_others > 0), 0.0, d_target * np.abs(d_others))
        saliency[touched] = 0.0
        best = int(np.argmax(saliency))
        if saliency[best] <= 0.0:
            return JsmaResult(x_adv, False, n_modified)
        flat = x_adv.reshape(-1)
        flat[best] = np.clip(flat[best] + np.float32(cfg.theta), 0.0, 1.0)
        touched[best] = True
        n_modified += 1


def attack_dataset(classifier, ds: Dataset, cfg: AttackConfig, seed=0) -> Dataset:
    """Adversarial copy of a dataset, for robustness evaluation columns.

    FGSM/PGD run untargeted on the true labels; JSMA runs targeted with a
    uniformly drawn wrong class per sample.
    """
    if cfg.kind == "fgsm":
        x_adv = fgsm(classifier, ds.x, ds.y, cfg.epsilon)
    elif cfg.kind == "pgd":
        x_adv = pgd(classifier, ds.x, ds.y, cfg, seed=seed)
    else:
        stream = rng.named_stream(seed, "attack.jsma.targets")
        rows = []
        for i in range(len(ds)):
            others = [c for c in range(ds.class_count) if c != int(ds.y[i])]
            target = int(others[stream.integers(0, len(others))])
            rows.append(jsma(classifier, ds.x[i], target, cfg).x_adv)
        x_adv = np.stack(rows)
    return Dataset(x_adv, ds.y.copy(), ds.class_count, split=f"adv-{cfg.kind}")
